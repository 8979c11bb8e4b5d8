// SPDX-License-Identifier: Apache-2.0
#pragma once

// Partial-label fine-tuning. The confidence matrix starts uniform over each
// candidate set, weights the cross-entropy of the label head, and is sharpened
// multiplicatively by the model's predictions as training proceeds.

#include "plood/backbone.hpp"
#include "plood/datagen.hpp"
#include "plood/error.hpp"

#include <functional>
#include <string>

namespace plood::pll {

inline constexpr double kProbFloor = 1e-12;

/// Row-stochastic N x q label confidence, zero outside each candidate set.
struct ConfidenceMatrix
{
  RowMatrix        values;
  data::MaskMatrix mask;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  /// Row sums within `tol` of 1, entries non-negative, support inside the mask.
  bool valid(double tol = 1e-9) const;
};

ConfidenceMatrix init_confidence(data::MaskMatrix const &mask);

/// Confidence-weighted cross-entropy, averaged over instances.
template <typename Derived>
double loss_pl(Eigen::MatrixBase<Derived> const &probs, ConfidenceMatrix const &c)
{
  if (probs.rows() != c.rows() || probs.cols() != c.cols()) { throw Error("loss_pl: shape mismatch"); }
  if (probs.rows() == 0) { return 0.0; }
  double sum = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    for (Index j = 0; j < probs.cols(); ++j) {
      if (c.mask(i, j) && c.values(i, j) != 0.0) { sum -= c.values(i, j) * std::log(std::max(probs(i, j), kProbFloor)); }
    }
  }
  return sum / static_cast<double>(probs.rows());
}

/// Which matrix is passed through the softmax inside the confidence update.
enum class UpdateInput
{
  Probabilities, // softmax of the softmax output
  Logits,
};

enum class UpdateCadence
{
  Epoch, // once per epoch from a full-dataset forward pass
  Step,  // after every mini-batch for the rows in that batch
};

/// C <- normalize(C (*) softmax(scores)) on candidate entries. `scores` is
/// whatever `UpdateInput` selects; the softmax is applied here.
template <typename Derived>
ConfidenceMatrix update_confidence(ConfidenceMatrix const &c, Eigen::MatrixBase<Derived> const &scores)
{
  if (scores.rows() != c.rows() || scores.cols() != c.cols()) { throw Error("update_confidence: shape mismatch"); }
  ConfidenceMatrix next = c;
  for (Index i = 0; i < c.rows(); ++i) {
    Eigen::RowVectorXd s = scores.row(i);
    s.array() -= s.maxCoeff();
    s = s.array().exp();
    s /= s.sum();
    auto row = next.values.row(i);
    row = (row.array() * s.array() * c.mask.row(i).template cast<double>()).matrix();
    double const mass = row.sum();
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw Error("update_confidence: row " + std::to_string(i) + " lost all mass");
    }
    row /= mass;
  }
  return next;
}

struct PllConfig
{
  Index         epochs = 50;
  Index         batch_size = 128;
  double        lr = 1e-3;
  std::uint64_t seed = 0;
  UpdateInput   update_input = UpdateInput::Probabilities;
  UpdateCadence cadence = UpdateCadence::Epoch;

  void validate() const;
};

char const   *update_input_name(UpdateInput u);
UpdateInput   parse_update_input(std::string const &s);
char const   *cadence_name(UpdateCadence c);
UpdateCadence parse_cadence(std::string const &s);

/// Training graph for the partial-label loss with the confidence rows of the
/// current batch bound as constants.
class PllGraph
{
public:
  PllGraph();
  void forward(Tensor const &images, RowMatrix const &confidence_rows);

  ad::Graph              &graph() { return g_; }
  ad::NodeId              loss() const { return l_pl_; }
  double                  l_pl() const { return g_.value(l_pl_)[0]; }
  RowMatrix               logits() const { return g_.value(logits_).matrix(); }
  RowMatrix               probs() const { return g_.value(probs_).matrix(); }
  /// Parameter node for each trainable slot, in `trainable_slots(Phase::Pll)` order.
  std::vector<ad::NodeId> param_nodes() const;

private:
  ad::Graph           g_;
  net::ExtractorNodes ext_;
  ad::NodeId          w_, b_, logits_, probs_, mask_, scale_, l_pl_;
};

struct PllLogRow
{
  Index  epoch = 0;
  double l_pl = 0.0;
  double mean_max_confidence = 0.0;
  double wall_ms = 0.0;
};

struct PllResult
{
  net::BackboneParams    params;
  ConfidenceMatrix       confidence;
  std::vector<PllLogRow> log;
};

using EpochHook = std::function<void(Index epoch, ConfidenceMatrix const &)>;

/// Fine-tunes every parameter from `start` (ssfe phase) on the candidate sets of `dataset`.
PllResult finetune_pll(data::LabeledImageSet const &dataset, net::BackboneParams const &start, PllConfig const &cfg,
                       EpochHook const &on_epoch = {});

std::string log_csv(std::vector<PllLogRow> const &log);

void             save_confidence(ConfidenceMatrix const &c, std::filesystem::path const &path);
ConfidenceMatrix load_confidence(std::filesystem::path const &path);

} // namespace plood::pll
