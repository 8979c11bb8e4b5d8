// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "plood/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace plood::harness {

inline constexpr int kReportSchemaVersion = 1;

struct SeedData
{
  data::LabeledImageSet              train, test;
  std::vector<data::LabeledImageSet> ood; // one per configured OOD kind
};

struct TrainedModel
{
  net::BackboneParams          params;
  pll::ConfidenceMatrix        confidence;
  std::vector<ssfe::SsfeLogRow> ssfe_log;
  std::vector<pll::PllLogRow>   pll_log;
};

struct MetricEntry
{
  std::string      ood;
  score::ScoreKind kind = score::ScoreKind::PartialEnergy;
  double           aupr_in = 0.0;
  double           fpr95 = 0.0;
};

struct RunBlock
{
  std::uint64_t            seed = 0;
  std::string              variant; // "plood", "ssfe" or "no-ssfe"
  std::uint64_t            model_checksum = 0;
  double                   id_accuracy = 0.0;
  std::vector<double>      glc;
  double                   final_l_pl = 0.0;
  double                   wall_ms = 0.0;
  std::vector<MetricEntry> metrics;

  // Per-instance scores, kept for histograms and score dumps.
  std::map<std::string, Eigen::VectorXd>                       id_scores;  // by kind
  std::map<std::pair<std::string, std::string>, Eigen::VectorXd> ood_scores; // by (ood, kind)
};

struct SummaryEntry
{
  std::string variant, ood, kind;
  double      aupr_in_mean = 0.0, aupr_in_std = 0.0, fpr95_mean = 0.0, fpr95_std = 0.0;
};

/// Seed-averaged difference of a row against a reference row.
struct DeltaEntry
{
  std::string ood, kind, against;
  double      delta_aupr_in = 0.0, delta_fpr95 = 0.0;
};

struct ScoreReport
{
  int                                schema_version = kReportSchemaVersion;
  std::string                        mode; // experiment | score-ablation | ssfe-ablation
  ExperimentConfig                   config;
  std::vector<RunBlock>              runs;
  std::vector<SummaryEntry>          summary;
  std::map<std::string, double>      accuracy_mean, accuracy_std; // by variant
  std::vector<DeltaEntry>            deltas;
  double                             wall_ms = 0.0;
  std::map<std::string, std::string> artifacts;

  std::vector<std::string> variants() const;
};

enum class AblationMode
{
  Score,
  Ssfe,
};
AblationMode parse_ablation(std::string const &s);

/// Stage seeds derived from one run seed.
std::uint64_t stage_seed(std::uint64_t run_seed, std::uint64_t stage);

SeedData     make_seed_data(ExperimentConfig const &cfg, std::uint64_t seed);
TrainedModel train_model(ExperimentConfig const &cfg, SeedData const &data, std::uint64_t seed, bool with_ssfe);
RunBlock     score_model(ExperimentConfig const &cfg, TrainedModel const &model, SeedData const &data,
                         std::uint64_t seed, std::string variant);

/// Full pipeline per seed with every requested score kind.
ScoreReport run_experiment(ExperimentConfig const &cfg);
/// score: one model per seed, all score kinds on shared logits, deltas against energy.
/// ssfe: paired with/without-SSFE models per seed, deltas with minus without.
ScoreReport run_ablation(ExperimentConfig const &cfg, AblationMode mode);

/// Fills summary, accuracy and delta fields from `runs`.
void summarize(ScoreReport &report);

nlohmann::json to_json(ScoreReport const &report);
/// Pretty JSON with sorted keys; the canonical serialization.
std::string canonical_json(ScoreReport const &report);
/// Hash of the canonical JSON without wall-clock and artifact fields.
std::uint64_t canonical_hash(nlohmann::json doc);
std::uint64_t canonical_hash(ScoreReport const &report);

/// Rows: seed, variant, ood, kind, metric, value (header excluded from the count).
std::string report_csv(ScoreReport const &report);
/// Per run, ood and kind: shared bin edges with ID and OOD counts.
nlohmann::json plot_data(ScoreReport const &report);

enum class ReportFormat
{
  Json,
  Csv,
  PlotData,
};
ReportFormat parse_report_format(std::string const &s);

/// Writes report.json, report.csv and/or plotdata.json into `dir`.
std::vector<std::filesystem::path> emit_report(ScoreReport &report, std::filesystem::path const &dir,
                                               std::set<ReportFormat> const &formats);

/// CSV with header `instance_id,origin,kind,score`.
std::string score_dump_csv(RunBlock const &run);

std::string hex64(std::uint64_t v);

} // namespace plood::harness
