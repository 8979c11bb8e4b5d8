// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat `key = value` configuration with dotted section prefixes. Lines
// starting with '#' are comments. Every key has a default; unknown keys are
// rejected.

#include "plood/datagen.hpp"
#include "plood/pll.hpp"
#include "plood/scoring.hpp"
#include "plood/ssfe.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace plood::harness {

struct DatasetConfig
{
  Index                      classes = 6;
  Index                      n_train = 1200;
  Index                      n_test = 400;
  Index                      n_ood = 400;
  double                     partial_rate = 0.1;
  double                     pixel_noise = data::kDefaultPixelNoise;
  std::vector<data::OodKind> ood_kinds = data::all_ood_kinds();
};

struct ExperimentConfig
{
  DatasetConfig                 data;
  ssfe::SsfeConfig              ssfe;
  pll::PllConfig                pll;
  std::vector<score::ScoreKind> kinds = score::all_score_kinds();
  score::GlcMode                glc_mode = score::GlcMode::RawMean;
  score::ScoreOptions           score;
  Index                         histogram_bins = 20;
  std::vector<std::uint64_t>    seeds = {0, 1, 2, 3, 4};
  std::string                   out_dir = "plood-out";

  void validate() const;
};

/// Applies `key = value` lines on top of `base`.
ExperimentConfig parse_config(std::string const &text, ExperimentConfig base = {});
ExperimentConfig load_config(std::filesystem::path const &path);

/// Applies one key; throws ConfigError for unknown keys or bad values.
void set_key(ExperimentConfig &cfg, std::string const &key, std::string const &value);

/// Every key with its current value, in sorted key order.
std::map<std::string, std::string> to_key_values(ExperimentConfig const &cfg);
std::string                        to_config_text(ExperimentConfig const &cfg);

std::vector<std::string> split_list(std::string const &s);

} // namespace plood::harness
