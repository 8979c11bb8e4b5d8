// SPDX-License-Identifier: Apache-2.0
#include "plood/error.hpp"
#include "plood/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace plood;
using namespace plood::harness;

namespace {

ExperimentConfig tiny(std::string const &extra = "")
{
  return parse_config("dataset.n_train = 60\n"
                      "dataset.n_test = 40\n"
                      "dataset.n_ood = 40\n"
                      "ssfe.epochs = 1\n"
                      "pll.epochs = 2\n"
                      "ssfe.batch_size = 32\n" +
                      extra);
}

std::size_t count_lines(std::string const &s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void check_metric_ranges(ScoreReport const &r)
{
  for (auto const &run : r.runs) {
    CHECK(run.id_accuracy >= 0.0);
    CHECK(run.id_accuracy <= 1.0);
    for (auto const &m : run.metrics) {
      CHECK(m.aupr_in >= 0.0);
      CHECK(m.aupr_in <= 1.0);
      CHECK(m.fpr95 >= 0.0);
      CHECK(m.fpr95 <= 1.0);
    }
  }
}

} // namespace

TEST_CASE("configuration text")
{
  ExperimentConfig const def;
  CHECK(def.ssfe.lr == 1e-3);
  CHECK(def.ssfe.alpha == 0.5);
  CHECK(def.ssfe.batch_size == 128);
  CHECK(def.data.partial_rate == 0.1);
  CHECK(def.seeds.size() == 5);
  CHECK(to_key_values(parse_config("")) == to_key_values(def));

  auto const cfg = parse_config("# comment\n\ndataset.classes = 8\n  ssfe.alpha=0.25  \nrun.seeds = 4, 9\n"
                                "score.kinds = PE,odin\nscore.glc_mode = z-score\n");
  CHECK(cfg.data.classes == 8);
  CHECK(cfg.ssfe.alpha == 0.25);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 9});
  CHECK(cfg.kinds == std::vector<score::ScoreKind>{score::ScoreKind::PartialEnergy, score::ScoreKind::Odin});
  CHECK(cfg.glc_mode == score::GlcMode::ZScore);
  CHECK(to_key_values(parse_config(to_config_text(cfg))) == to_key_values(cfg));

  CHECK_THROWS_AS(parse_config("ssfe.momentum = 0.9\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dataset.classes = six\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dataset.classes\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("run.seeds = \n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("dataset.partial_rate = 1.5\n").validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/plood.cfg"), ConfigError);
}

TEST_CASE("repeated seeds give identical blocks")
{
  auto const r = run_experiment(tiny("run.seeds = 7, 7\ndataset.ood_kinds = blob\n"));
  REQUIRE(r.runs.size() == 2);
  auto const &a = r.runs[0];
  auto const &b = r.runs[1];
  CHECK(a.model_checksum == b.model_checksum);
  CHECK(a.id_accuracy == b.id_accuracy);
  CHECK(a.glc == b.glc);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t k = 0; k < a.metrics.size(); ++k) {
    CHECK(a.metrics[k].aupr_in == b.metrics[k].aupr_in);
    CHECK(a.metrics[k].fpr95 == b.metrics[k].fpr95);
  }
  for (auto const &s : r.summary) {
    CHECK(s.aupr_in_std == 0.0);
  }
}

TEST_CASE("report contents follow the requested kinds")
{
  auto r = run_experiment(tiny("run.seeds = 1, 2\nscore.kinds = PE, energy\ndataset.ood_kinds = blob, stripes-offgrid\n"));
  CHECK(r.mode == "experiment");
  CHECK(r.schema_version == kReportSchemaVersion);
  for (auto const &run : r.runs) {
    std::multiset<std::string> kinds;
    for (auto const &m : run.metrics) {
      kinds.insert(score::score_kind_name(m.kind));
    }
    CHECK(kinds == std::multiset<std::string>{"PE", "PE", "energy", "energy"});
    CHECK(run.variant == "plood");
    CHECK(run.glc.size() == 6);
  }
  check_metric_ranges(r);

  auto const csv = report_csv(r);
  CHECK(csv.rfind("seed,variant,ood,kind,metric,value\n", 0) == 0);
  CHECK(count_lines(csv) - 1 == 2 * 2 * 2 * 3);

  auto const text = canonical_json(r);
  CHECK(nlohmann::json::parse(text).dump(2) + "\n" == text);
  CHECK(nlohmann::json::parse(text).at("schema_version") == kReportSchemaVersion);

  auto const plots = plot_data(r).at("histograms");
  CHECK(plots.size() == 2 * 2 * 2);
  for (auto const &h : plots) {
    CHECK(h.at("edges").size() == static_cast<std::size_t>(r.config.histogram_bins + 1));
    Index id = 0, ood = 0;
    for (auto c : h.at("id_counts")) {
      id += c.get<Index>();
    }
    for (auto c : h.at("ood_counts")) {
      ood += c.get<Index>();
    }
    CHECK(id == 40);
    CHECK(ood == 40);
  }

  auto const dump = score_dump_csv(r.runs[0]);
  CHECK(count_lines(dump) - 1 == 2 * 40 + 2 * 2 * 40);
  CHECK(dump.find(",ood:blob,PE,") != std::string::npos);
}

TEST_CASE("score ablation shares one model across kinds")
{
  auto const r = run_ablation(tiny("run.seeds = 3\nscore.kinds = PE\ndataset.ood_kinds = uniform-noise\n"), AblationMode::Score);
  CHECK(r.mode == "score-ablation");
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].metrics.size() == score::all_score_kinds().size());
  CHECK(r.deltas.size() == score::all_score_kinds().size() - 1);
  for (auto const &d : r.deltas) {
    CHECK(d.against == "energy");
    CHECK(std::isfinite(d.delta_aupr_in));
  }
  auto const doc = to_json(r);
  std::set<std::string> checksums;
  for (auto const &run : doc.at("runs")) {
    checksums.insert(run.at("model_checksum").get<std::string>());
  }
  CHECK(checksums.size() == 1);
  check_metric_ranges(r);
}

TEST_CASE("ssfe ablation pairs models per seed")
{
  auto const r = run_ablation(tiny("run.seeds = 3, 4\nscore.kinds = PE, energy\ndataset.ood_kinds = blob\n"), AblationMode::Ssfe);
  CHECK(r.mode == "ssfe-ablation");
  REQUIRE(r.runs.size() == 4);
  for (std::size_t k = 0; k < r.runs.size(); k += 2) {
    CHECK(r.runs[k].variant == "ssfe");
    CHECK(r.runs[k + 1].variant == "no-ssfe");
    CHECK(r.runs[k].seed == r.runs[k + 1].seed);
    CHECK(r.runs[k].model_checksum != r.runs[k + 1].model_checksum);
  }
  REQUIRE(r.deltas.size() == 2);
  for (auto const &d : r.deltas) {
    CHECK(d.against == "no-ssfe");
    CHECK(std::isfinite(d.delta_aupr_in));
    CHECK(std::isfinite(d.delta_fpr95));
  }
  CHECK(r.accuracy_mean.count("ssfe") == 1);
  CHECK(r.accuracy_mean.count("no-ssfe") == 1);
  CHECK(count_lines(report_csv(r)) - 1 == 2 * 2 * 1 * 2 * 3);
  check_metric_ranges(r);
}

TEST_CASE("reports are reproducible and written to disk")
{
  auto const cfg = tiny("run.seeds = 5\nscore.kinds = PE, energy, msp\ndataset.ood_kinds = checkerboard\n");
  auto       a = run_experiment(cfg);
  auto       b = run_experiment(cfg);
  CHECK(canonical_hash(a) == canonical_hash(b));
  b.runs[0].metrics[0].aupr_in += 1e-9;
  CHECK(canonical_hash(a) != canonical_hash(b));

  auto const dir = std::filesystem::temp_directory_path() / "plood_test_harness";
  std::filesystem::remove_all(dir);
  auto const before = canonical_hash(a);
  auto const written = emit_report(a, dir, {ReportFormat::Json, ReportFormat::Csv, ReportFormat::PlotData});
  CHECK(written.size() == 3);
  CHECK(a.artifacts.size() == 3);
  CHECK(canonical_hash(a) == before);
  std::ifstream      is(dir / "report.json");
  std::string const  text((std::istreambuf_iterator<char>(is)), {});
  CHECK(text == canonical_json(a));
  CHECK(canonical_hash(nlohmann::json::parse(text)) == before);

  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS_AS(emit_report(a, dir / "blocker" / "sub", {ReportFormat::Json}), StageError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid configurations are rejected before any stage runs")
{
  auto cfg = tiny("run.seeds = 1\n");
  cfg.ssfe.alpha = 3.0;
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  cfg.ssfe.alpha = 0.5;
  cfg.pll.lr = -1.0;
  CHECK_THROWS_AS(run_ablation(cfg, AblationMode::Ssfe), ConfigError);
  cfg.pll.lr = 1e-3;
  cfg.seeds.clear();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}
