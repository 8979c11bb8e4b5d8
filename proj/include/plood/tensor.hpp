// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

namespace plood {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<RowMatrix const>;

Index shape_size(Shape const &shape);
std::string to_string(Shape const &shape);

// Dense row-major tensor of 64-bit reals.
class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Eigen::VectorXd data);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor filled(Shape shape, double value);

  Shape const &shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  Eigen::VectorXd       &data() { return data_; }
  Eigen::VectorXd const &data() const { return data_; }
  double                &operator[](Index i) { return data_[i]; }
  double                 operator[](Index i) const { return data_[i]; }

  // View as (size / last extent) x (last extent).
  RowMatrixMap      matrix();
  ConstRowMatrixMap matrix() const;

  // A non-finite entry makes the sum non-finite; the full scan only runs when the sum overflows.
  bool all_finite() const { return std::isfinite(data_.sum()) || data_.allFinite(); }

  // Bitwise comparison of shape and values.
  friend bool operator==(Tensor const &a, Tensor const &b);

private:
  Shape           shape_;
  Eigen::VectorXd data_;
};

// Copies a row-major matrix expression into a rank-2 tensor.
template <typename Derived>
Tensor from_matrix(Eigen::MatrixBase<Derived> const &m)
{
  Tensor t({m.rows(), m.cols()});
  t.matrix() = m;
  return t;
}

} // namespace plood
