// SPDX-License-Identifier: Apache-2.0
#include "plood/metrics.hpp"

#include "plood/error.hpp"

#include <algorithm>
#include <cmath>

namespace plood::metrics {

namespace {

void check(EvalInput const &in)
{
  if (in.id_scores.empty() || in.ood_scores.empty()) { throw Error("metrics: score lists must be non-empty"); }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(in.id_scores.begin(), in.id_scores.end(), finite) ||
      !std::all_of(in.ood_scores.begin(), in.ood_scores.end(), finite)) {
    throw Error("metrics: non-finite score");
  }
}

// Scores oriented so that higher means ID.
std::vector<double> oriented(std::vector<double> const &s, bool higher_is_id)
{
  std::vector<double> out = s;
  if (!higher_is_id) {
    for (double &v : out) {
      v = -v;
    }
  }
  return out;
}

} // namespace

double aupr_in(EvalInput const &input)
{
  check(input);
  struct Entry
  {
    double score;
    bool   id;
  };
  std::vector<Entry> all;
  for (double v : oriented(input.id_scores, input.higher_is_id)) {
    all.push_back({v, true});
  }
  for (double v : oriented(input.ood_scores, input.higher_is_id)) {
    all.push_back({v, false});
  }
  std::sort(all.begin(), all.end(), [](Entry const &a, Entry const &b) { return a.score > b.score; });

  double const positives = static_cast<double>(input.id_scores.size());
  double       tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    for (; j < all.size() && all[j].score == all[i].score; ++j) {
      (all[j].id ? tp : fp) += 1.0;
    }
    double const recall = tp / positives;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double fpr95(EvalInput const &input)
{
  check(input);
  std::vector<double> id = oriented(input.id_scores, input.higher_is_id);
  std::sort(id.begin(), id.end(), std::greater<>());
  std::size_t const n = id.size();
  std::size_t const keep = (95 * n + 99) / 100; // ceil(0.95 n)
  double const      tau = id[keep - 1];
  std::vector<double> const ood = oriented(input.ood_scores, input.higher_is_id);
  auto const accepted = std::count_if(ood.begin(), ood.end(), [tau](double v) { return v >= tau; });
  return static_cast<double>(accepted) / static_cast<double>(ood.size());
}

double id_accuracy(RowMatrix const &logits, std::vector<std::uint16_t> const &labels)
{
  if (static_cast<Index>(labels.size()) != logits.rows()) { throw Error("id_accuracy: label count mismatch"); }
  if (labels.empty()) { return 0.0; }
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) { best = j; }
    }
    hits += best == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

} // namespace plood::metrics
