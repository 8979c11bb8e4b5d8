// SPDX-License-Identifier: Apache-2.0
#pragma once

// Self-supervised feature enhancement: every source image is presented in R
// grid rotations. A weighted rotation-classification loss trains h_rc to tell
// rotations apart while a rotation-irrelevance loss pulls the R copies of h_ri
// towards their mean.

#include "plood/backbone.hpp"
#include "plood/datagen.hpp"
#include "plood/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace plood::ssfe {

inline constexpr double kProbFloor = 1e-12;

/// Row-wise softmax of B x R rotation logits.
template <typename Derived>
RowMatrix rotation_probs(Eigen::MatrixBase<Derived> const &logits)
{
  if (!logits.allFinite()) { throw Error("rotation_probs: non-finite logits"); }
  RowMatrix p = logits;
  for (Index r = 0; r < p.rows(); ++r) {
    p.row(r).array() -= p.row(r).maxCoeff();
    p.row(r) = p.row(r).array().exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

/// Instance weights: 1 for the unrotated copy, 1 - P at the applied rotation otherwise.
/// `rotation` holds 1-based indices per row.
template <typename Derived>
Eigen::VectorXd rotation_weights(Eigen::MatrixBase<Derived> const &probs, std::vector<Index> const &rotation)
{
  if (static_cast<Index>(rotation.size()) != probs.rows()) { throw Error("rotation_weights: row count mismatch"); }
  Eigen::VectorXd w(probs.rows());
  for (Index i = 0; i < probs.rows(); ++i) {
    Index const r = rotation[static_cast<std::size_t>(i)];
    if (r < 1 || r > probs.cols()) { throw Error("rotation_weights: rotation index " + std::to_string(r) + " outside 1..R"); }
    w[i] = r == 1 ? 1.0 : std::clamp(1.0 - probs(i, r - 1), 0.0, 1.0);
  }
  return w;
}

/// Weighted rotation cross-entropy averaged over the N*R rows.
template <typename Derived, typename WDerived>
double loss_rc(Eigen::MatrixBase<Derived> const &probs, std::vector<Index> const &labels,
               Eigen::MatrixBase<WDerived> const &weights)
{
  if (static_cast<Index>(labels.size()) != probs.rows() || weights.size() != probs.rows()) {
    throw Error("loss_rc: batch shapes disagree");
  }
  if (probs.rows() == 0) { return 0.0; }
  double sum = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    Index const z = labels[static_cast<std::size_t>(i)];
    if (z < 1 || z > probs.cols()) { throw Error("loss_rc: rotation label outside 1..R"); }
    sum -= weights(i) * std::log(std::max(probs(i, z - 1), kProbFloor));
  }
  return sum / static_cast<double>(probs.rows());
}

/// Mean squared Euclidean distance of each copy's features to its instance mean.
/// Rows are grouped as (instance, rotation) with R consecutive rows per instance.
template <typename Derived>
double loss_ri(Eigen::MatrixBase<Derived> const &features, Index rotations)
{
  if (rotations < 2) { throw Error("loss_ri: need at least two rotations"); }
  if (features.rows() % rotations != 0) { throw Error("loss_ri: row count is not a multiple of R"); }
  double sum = 0.0;
  for (Index i = 0; i < features.rows(); i += rotations) {
    auto const            block = features.middleRows(i, rotations);
    Eigen::RowVectorXd const mean = block.colwise().mean();
    sum += (block.rowwise() - mean).squaredNorm();
  }
  return features.rows() ? sum / static_cast<double>(features.rows()) : 0.0;
}

double loss_ssfe(double l_rc, double l_ri, double alpha);

struct RotationBatch
{
  Tensor             images; // (B*R) x 1 x 16 x 16, R consecutive copies per source
  std::vector<Index> rotation_labels; // 1..R
  std::vector<Index> sources;
  Index              rotations = data::kRotations;
};

RotationBatch make_rotation_batch(Tensor const &images, std::vector<Index> const &sources,
                                  Index rotations = data::kRotations);

struct SsfeConfig
{
  double        alpha = 0.5;
  Index         epochs = 50;
  Index         batch_size = 128;
  double        lr = 1e-3;
  std::uint64_t seed = 0;
  Index         rotations = data::kRotations;
  std::string   distance = "sq-euclidean";

  void validate() const;
};

/// Training graph for the combined loss. Weights are computed from the
/// current probabilities and enter the loss as constants.
class SsfeGraph
{
public:
  SsfeGraph();

  void bind_params(net::BackboneParams const &params);
  /// Evaluates the combined loss for one batch.
  void forward(RotationBatch const &batch, double alpha);

  ad::Graph       &graph() { return g_; }
  ad::NodeId       loss() const { return l_ssfe_; }
  double           l_rc() const { return g_.value(l_rc_)[0]; }
  double           l_ri() const { return g_.value(l_ri_)[0]; }
  double           l_ssfe() const { return g_.value(l_ssfe_)[0]; }
  RowMatrix        probs() const { return g_.value(probs_).matrix(); }
  RowMatrix        h_ri() const { return g_.value(ext_.h_ri).matrix(); }
  Eigen::VectorXd const &weights() const { return weights_; }

  /// Parameter node for each trainable slot, in `trainable_slots(Phase::Ssfe)` order.
  std::vector<ad::NodeId> param_nodes() const;

private:
  ad::Graph           g_;
  net::ExtractorNodes ext_;
  ad::NodeId          rot_w_, rot_b_, probs_, rc_mask_, rc_scale_, l_rc_, centering_, ri_scale_, l_ri_, alpha_,
    beta_, l_ssfe_;
  Eigen::VectorXd     weights_;
};

struct SsfeLogRow
{
  Index  epoch = 0;
  double l_rc = 0.0, l_ri = 0.0, l_ssfe = 0.0;
  double wall_ms = 0.0;
};

struct SsfeResult
{
  net::BackboneParams     params;
  std::vector<SsfeLogRow> log;
};

SsfeResult train_ssfe(data::LabeledImageSet const &dataset, SsfeConfig const &cfg);

/// CSV with header `epoch,l_rc,l_ri,l_ssfe,wall_ms`.
std::string log_csv(std::vector<SsfeLogRow> const &log);

} // namespace plood::ssfe
