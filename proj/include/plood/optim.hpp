// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "plood/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace plood::ad {

struct AdamConfig
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment state, one accumulator pair per parameter.
class OptimState
{
public:
  OptimState(AdamConfig cfg, std::span<Tensor const> params);

  AdamConfig const              &config() const { return cfg_; }
  std::int64_t                   step() const { return step_; }
  std::vector<Eigen::VectorXd>  &first_moments() { return m_; }
  std::vector<Eigen::VectorXd>  &second_moments() { return v_; }
  std::vector<Eigen::VectorXd> const &first_moments() const { return m_; }
  std::vector<Eigen::VectorXd> const &second_moments() const { return v_; }

private:
  friend void optim_step(std::span<Tensor> params, std::span<Tensor const> grads, OptimState &state);
  AdamConfig                   cfg_;
  std::vector<Eigen::VectorXd> m_, v_;
  std::int64_t                 step_ = 0;
};

void optim_step(std::span<Tensor> params, std::span<Tensor const> grads, OptimState &state);

} // namespace plood::ad
