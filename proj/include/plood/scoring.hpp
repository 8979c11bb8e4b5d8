// SPDX-License-Identifier: Apache-2.0
#pragma once

// Detection scores. Every score is oriented higher-is-ID.
//
// Partial energy: per-label energies E_ij = -log(1 + exp(P_ij)) are weighted by
// an aggregate label confidence g_j taken from the training confidence matrix
// and summed over the full label space. The emitted score is -sum_j g_j E_ij.

#include "plood/error.hpp"
#include "plood/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace plood::score {

enum class GlcMode
{
  RawMean, // g_j = q * mean_i C_ij
  ZScore,  // column means standardized across labels
};
char const *glc_mode_name(GlcMode m);
GlcMode     parse_glc_mode(std::string const &s);

struct GlcVector
{
  Eigen::VectorXd g;
  GlcMode         mode = GlcMode::RawMean;
  Eigen::VectorXd mu;    // column means of C
  Eigen::VectorXd sigma; // column population standard deviations of C (reported only)
};

template <typename Derived>
GlcVector aggregate_label_confidence(Eigen::MatrixBase<Derived> const &confidence, GlcMode mode)
{
  Index const n = confidence.rows();
  if (n < 2) { throw Error("aggregate_label_confidence: need at least two instances"); }
  GlcVector out;
  out.mode = mode;
  out.mu = confidence.colwise().mean().transpose();
  out.sigma =
    ((confidence.rowwise() - out.mu.transpose()).colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
  Index const q = out.mu.size();
  if (mode == GlcMode::RawMean) {
    out.g = static_cast<double>(q) * out.mu;
  } else {
    double const mean = out.mu.mean();
    double const sd = std::sqrt((out.mu.array() - mean).square().mean());
    if (sd <= 1e-15 * std::max(1.0, std::abs(mean))) {
      out.g = Eigen::VectorXd::Zero(q);
    } else {
      out.g = (out.mu.array() - mean) / sd;
    }
  }
  return out;
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// E = -log(1 + exp(x)) elementwise.
template <typename Derived>
RowMatrix label_energy(Eigen::MatrixBase<Derived> const &x)
{
  return -x.unaryExpr([](double v) { return softplus(v); });
}

enum class ScoreKind
{
  PartialEnergy,
  Energy,
  JointEnergy,
  Entropy,
  Msp,
  Odin,
};
char const            *score_kind_name(ScoreKind k);
ScoreKind              parse_score_kind(std::string const &s);
std::vector<ScoreKind> all_score_kinds();

struct ScoreVector
{
  Eigen::VectorXd scores;
  ScoreKind       kind = ScoreKind::PartialEnergy;
  bool            higher_is_id = true;
};

struct PartialEnergyResult
{
  Eigen::VectorXd pe;    // sum_j g_j E_ij
  ScoreVector     score; // -pe
};

template <typename Derived>
PartialEnergyResult partial_energy(Eigen::MatrixBase<Derived> const &energy, GlcVector const &glc)
{
  if (energy.cols() != glc.g.size()) { throw Error("partial_energy: label count mismatch"); }
  PartialEnergyResult r;
  r.pe = energy * glc.g;
  r.score.scores = -r.pe;
  r.score.kind = ScoreKind::PartialEnergy;
  return r;
}

inline Eigen::VectorXd logsumexp_rows(RowMatrix const &t)
{
  Eigen::VectorXd const m = t.rowwise().maxCoeff();
  return m.array() + (t.colwise() - m).array().exp().rowwise().sum().log();
}

inline RowMatrix softmax_rows(RowMatrix t)
{
  Eigen::VectorXd const m = t.rowwise().maxCoeff();
  t = (t.colwise() - m).array().exp();
  t.array().colwise() /= t.rowwise().sum().array();
  return t;
}

/// Logit-based baselines; `temperature` is used by energy and odin.
ScoreVector baseline_score(RowMatrix const &logits, ScoreKind kind, double temperature = 1.0);

/// Which matrix the label energies are computed from.
enum class EnergyInput
{
  Probabilities,
  Logits,
};
char const *energy_input_name(EnergyInput e);
EnergyInput parse_energy_input(std::string const &s);

struct ScoreOptions
{
  double      energy_temperature = 1.0;
  double      odin_temperature = 1000.0;
  EnergyInput pe_input = EnergyInput::Probabilities;
};

/// Any score kind from the label-head logits; `glc` is only read for PE.
ScoreVector compute_score(ScoreKind kind, RowMatrix const &logits, GlcVector const &glc, ScoreOptions const &opt);

} // namespace plood::score
