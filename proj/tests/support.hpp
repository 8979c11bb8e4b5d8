// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hand-rolled generators shared by the unit and acceptance tests.

#include "plood/random.hpp"
#include "plood/tensor.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace plood::testing {

inline double uniform(Rng &rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Index uniform_int(Rng &rng, Index lo, Index hi)
{
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline Tensor random_tensor(Rng &rng, Shape shape, double lo = -1.0, double hi = 1.0)
{
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) {
    t[i] = uniform(rng, lo, hi);
  }
  return t;
}

inline RowMatrix random_matrix(Rng &rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0)
{
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = uniform(rng, lo, hi);
  }
  return m;
}

// Rows drawn from exp(uniform) then normalized: strictly positive, row-stochastic.
inline RowMatrix random_probs(Rng &rng, Index rows, Index cols, double spread = 3.0)
{
  RowMatrix p(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    double s = 0.0;
    for (Index j = 0; j < cols; ++j) {
      p(i, j) = std::exp(uniform(rng, -spread, spread));
      s += p(i, j);
    }
    p.row(i) /= s;
  }
  return p;
}

} // namespace plood::testing
