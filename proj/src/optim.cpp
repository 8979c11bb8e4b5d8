// SPDX-License-Identifier: Apache-2.0
#include "plood/optim.hpp"

#include "plood/error.hpp"

#include <cmath>

namespace plood::ad {

OptimState::OptimState(AdamConfig cfg, std::span<Tensor const> params)
  : cfg_(cfg)
{
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) {
    throw Error("optimizer: decay rates must lie in (0,1)");
  }
  for (Tensor const &p : params) {
    m_.push_back(Eigen::VectorXd::Zero(p.size()));
    v_.push_back(Eigen::VectorXd::Zero(p.size()));
  }
}

void optim_step(std::span<Tensor> params, std::span<Tensor const> grads, OptimState &state)
{
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw Error("optimizer: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                " grads, " + std::to_string(state.m_.size()) + " accumulators");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].size() != state.m_[i].size()) {
      throw Error("optimizer: shape mismatch at parameter " + std::to_string(i) + " " +
                  to_string(params[i].shape()) + " vs " + to_string(grads[i].shape()));
    }
  }

  AdamConfig const &c = state.cfg_;
  ++state.step_;
  double const t = static_cast<double>(state.step_);
  double const bc1 = 1.0 - std::pow(c.beta1, t);
  double const bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto const g = grads[i].data().array();
    auto       m = state.m_[i].array();
    auto       v = state.v_[i].array();
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    params[i].data().array() -= c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
  }
}

} // namespace plood::ad
