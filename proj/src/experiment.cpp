// SPDX-License-Identifier: Apache-2.0
#include "plood/experiment.hpp"

#include "plood/metrics.hpp"
#include "plood/random.hpp"

#include <chrono>
#include <cmath>

namespace plood::harness {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename F>
auto staged(char const *stage, F &&f)
{
  try {
    return f();
  } catch (StageError const &) {
    throw;
  } catch (std::exception const &e) {
    throw StageError(stage, e.what());
  }
}

} // namespace

std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

AblationMode parse_ablation(std::string const &s)
{
  if (s == "score") { return AblationMode::Score; }
  if (s == "ssfe") { return AblationMode::Ssfe; }
  throw ConfigError("unknown ablation '" + s + "'");
}

std::uint64_t stage_seed(std::uint64_t run_seed, std::uint64_t stage) { return mix_seed(run_seed, stage); }

SeedData make_seed_data(ExperimentConfig const &cfg, std::uint64_t seed)
{
  return staged("generate-data", [&] {
    auto const spec = data::GlyphSpec::standard(cfg.data.classes, cfg.data.pixel_noise);
    SeedData   d;
    d.train = data::generate_id_dataset(spec, cfg.data.n_train, stage_seed(seed, 11), data::Origin::IdTrain,
                                        cfg.data.partial_rate);
    d.test = data::generate_id_dataset(spec, cfg.data.n_test, stage_seed(seed, 12), data::Origin::IdTest,
                                       cfg.data.partial_rate);
    for (std::size_t k = 0; k < cfg.data.ood_kinds.size(); ++k) {
      d.ood.push_back(data::generate_ood_dataset(cfg.data.ood_kinds[k], cfg.data.n_ood,
                                                 stage_seed(seed, 20 + static_cast<std::uint64_t>(cfg.data.ood_kinds[k])),
                                                 cfg.data.pixel_noise));
    }
    return d;
  });
}

TrainedModel train_model(ExperimentConfig const &cfg, SeedData const &data, std::uint64_t seed, bool with_ssfe)
{
  TrainedModel model;
  auto         ssfe_cfg = cfg.ssfe;
  ssfe_cfg.seed = stage_seed(seed, 31);
  net::BackboneParams start = staged("train-ssfe", [&] {
    if (!with_ssfe) { return net::init_ssfe(ssfe_cfg.seed, ssfe_cfg.rotations); }
    auto r = ssfe::train_ssfe(data.train, ssfe_cfg);
    model.ssfe_log = std::move(r.log);
    return std::move(r.params);
  });
  auto pll_cfg = cfg.pll;
  pll_cfg.seed = stage_seed(seed, 32);
  auto r = staged("finetune-pll", [&] { return pll::finetune_pll(data.train, start, pll_cfg); });
  model.params = std::move(r.params);
  model.confidence = std::move(r.confidence);
  model.pll_log = std::move(r.log);
  return model;
}

RunBlock score_model(ExperimentConfig const &cfg, TrainedModel const &model, SeedData const &data,
                     std::uint64_t seed, std::string variant)
{
  return staged("score", [&] {
    RunBlock run;
    run.seed = seed;
    run.variant = std::move(variant);
    run.model_checksum = net::checksum(model.params);
    run.final_l_pl = model.pll_log.empty() ? 0.0 : model.pll_log.back().l_pl;

    auto const glc = score::aggregate_label_confidence(model.confidence.values, cfg.glc_mode);
    run.glc.assign(glc.g.data(), glc.g.data() + glc.g.size());

    RowMatrix const id_logits = net::pll_logits_batched(model.params, data.test.images);
    run.id_accuracy = metrics::id_accuracy(id_logits, data.test.true_labels);
    for (auto kind : cfg.kinds) {
      run.id_scores[score::score_kind_name(kind)] = score::compute_score(kind, id_logits, glc, cfg.score).scores;
    }
    for (std::size_t k = 0; k < data.ood.size(); ++k) {
      std::string const ood = data::ood_kind_name(cfg.data.ood_kinds[k]);
      RowMatrix const   logits = net::pll_logits_batched(model.params, data.ood[k].images);
      for (auto kind : cfg.kinds) {
        std::string const name = score::score_kind_name(kind);
        auto const        s = score::compute_score(kind, logits, glc, cfg.score).scores;
        run.ood_scores[{ood, name}] = s;
        auto const &idv = run.id_scores[name];
        metrics::EvalInput in{{idv.data(), idv.data() + idv.size()}, {s.data(), s.data() + s.size()}, true};
        run.metrics.push_back({ood, kind, metrics::aupr_in(in), metrics::fpr95(in)});
      }
    }
    return run;
  });
}

std::vector<std::string> ScoreReport::variants() const
{
  std::vector<std::string> out;
  for (auto const &r : runs) {
    if (std::find(out.begin(), out.end(), r.variant) == out.end()) { out.push_back(r.variant); }
  }
  return out;
}

namespace {

std::pair<double, double> mean_std(std::vector<double> const &v)
{
  if (v.empty()) { return {0.0, 0.0}; }
  double mean = 0.0;
  for (double x : v) {
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) { return {mean, 0.0}; }
  double ss = 0.0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

SummaryEntry const *find_summary(std::vector<SummaryEntry> const &s, std::string const &variant,
                                 std::string const &ood, std::string const &kind)
{
  for (auto const &e : s) {
    if (e.variant == variant && e.ood == ood && e.kind == kind) { return &e; }
  }
  return nullptr;
}

} // namespace

void summarize(ScoreReport &report)
{
  report.summary.clear();
  report.deltas.clear();
  report.accuracy_mean.clear();
  report.accuracy_std.clear();
  auto const &cfg = report.config;
  for (auto const &variant : report.variants()) {
    std::vector<double> acc;
    for (auto const &r : report.runs) {
      if (r.variant == variant) { acc.push_back(r.id_accuracy); }
    }
    std::tie(report.accuracy_mean[variant], report.accuracy_std[variant]) = mean_std(acc);
    for (auto ood_kind : cfg.data.ood_kinds) {
      std::string const ood = data::ood_kind_name(ood_kind);
      for (auto kind : cfg.kinds) {
        std::vector<double> aupr, fpr;
        for (auto const &r : report.runs) {
          if (r.variant != variant) { continue; }
          for (auto const &m : r.metrics) {
            if (m.ood == ood && m.kind == kind) {
              aupr.push_back(m.aupr_in);
              fpr.push_back(m.fpr95);
            }
          }
        }
        SummaryEntry e{variant, ood, score::score_kind_name(kind)};
        std::tie(e.aupr_in_mean, e.aupr_in_std) = mean_std(aupr);
        std::tie(e.fpr95_mean, e.fpr95_std) = mean_std(fpr);
        report.summary.push_back(e);
      }
    }
  }

  if (report.mode == "score-ablation") {
    for (auto const &e : report.summary) {
      auto const *ref = find_summary(report.summary, e.variant, e.ood, "energy");
      if (ref == nullptr || e.kind == "energy") { continue; }
      report.deltas.push_back(
        {e.ood, e.kind, "energy", e.aupr_in_mean - ref->aupr_in_mean, e.fpr95_mean - ref->fpr95_mean});
    }
  } else if (report.mode == "ssfe-ablation") {
    for (auto const &e : report.summary) {
      if (e.variant != "ssfe") { continue; }
      auto const *ref = find_summary(report.summary, "no-ssfe", e.ood, e.kind);
      if (ref == nullptr) { continue; }
      report.deltas.push_back(
        {e.ood, e.kind, "no-ssfe", e.aupr_in_mean - ref->aupr_in_mean, e.fpr95_mean - ref->fpr95_mean});
    }
  }
}

ScoreReport run_experiment(ExperimentConfig const &cfg)
{
  cfg.validate();
  auto const  t0 = Clock::now();
  ScoreReport report;
  report.mode = "experiment";
  report.config = cfg;
  for (auto seed : cfg.seeds) {
    auto const t1 = Clock::now();
    auto const data = make_seed_data(cfg, seed);
    auto const model = train_model(cfg, data, seed, true);
    report.runs.push_back(score_model(cfg, model, data, seed, "plood"));
    report.runs.back().wall_ms = ms_since(t1);
  }
  summarize(report);
  report.wall_ms = ms_since(t0);
  return report;
}

ScoreReport run_ablation(ExperimentConfig const &cfg_in, AblationMode mode)
{
  ExperimentConfig cfg = cfg_in;
  if (mode == AblationMode::Score) {
    cfg.kinds = score::all_score_kinds();
  }
  cfg.validate();
  auto const  t0 = Clock::now();
  ScoreReport report;
  report.config = cfg;
  report.mode = mode == AblationMode::Score ? "score-ablation" : "ssfe-ablation";
  for (auto seed : cfg.seeds) {
    auto const data = make_seed_data(cfg, seed);
    if (mode == AblationMode::Score) {
      auto const t1 = Clock::now();
      auto const model = train_model(cfg, data, seed, true);
      report.runs.push_back(score_model(cfg, model, data, seed, "plood"));
      report.runs.back().wall_ms = ms_since(t1);
    } else {
      for (bool with : {true, false}) {
        auto const t1 = Clock::now();
        auto const model = train_model(cfg, data, seed, with);
        report.runs.push_back(score_model(cfg, model, data, seed, with ? "ssfe" : "no-ssfe"));
        report.runs.back().wall_ms = ms_since(t1);
      }
    }
  }
  summarize(report);
  report.wall_ms = ms_since(t0);
  return report;
}

} // namespace plood::harness
