// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "plood/tensor.hpp"

#include <cstdint>
#include <vector>

namespace plood::metrics {

struct EvalInput
{
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  bool                higher_is_id = true;
};

/// Average precision with ID as the positive class. Tied scores enter the
/// precision-recall sweep as one step.
double aupr_in(EvalInput const &input);

/// OOD acceptance rate at the largest threshold that keeps at least 95% of ID
/// scores (score >= threshold).
double fpr95(EvalInput const &input);

/// Argmax accuracy; ties go to the lowest label index.
double id_accuracy(RowMatrix const &logits, std::vector<std::uint16_t> const &labels);

} // namespace plood::metrics
