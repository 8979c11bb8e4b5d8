// SPDX-License-Identifier: Apache-2.0
// plood: command-line driver for data generation, training, scoring and reports.

#include "plood/experiment.hpp"
#include "plood/metrics.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace plood;
using harness::ExperimentConfig;

namespace {

struct Options
{
  std::string config_path, out, seed_override, scores, glc_mode;
  std::string ablation = "score";
  std::string data_dir, model, confidence, input;
  std::string formats = "json,csv,plotdata";
  bool        no_ssfe = false;
};

ExperimentConfig resolve_config(Options const &o)
{
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : harness::load_config(o.config_path);
  if (char const *env = std::getenv("PLOOD_OUT_DIR"); env != nullptr && *env != '\0') { cfg.out_dir = env; }
  if (!o.out.empty()) { cfg.out_dir = o.out; }
  if (!o.seed_override.empty()) { harness::set_key(cfg, "run.seeds", o.seed_override); }
  if (!o.scores.empty()) { harness::set_key(cfg, "score.kinds", o.scores); }
  if (!o.glc_mode.empty()) { harness::set_key(cfg, "score.glc_mode", o.glc_mode); }
  cfg.validate();
  return cfg;
}

void write_text(fs::path const &path, std::string const &text)
{
  if (path.has_parent_path()) { fs::create_directories(path.parent_path()); }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) { throw Error("cannot write " + path.string()); }
}

std::string read_text(fs::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw Error("cannot read " + path.string()); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path seed_dir(ExperimentConfig const &cfg, std::uint64_t seed)
{
  return fs::path(cfg.out_dir) / ("seed-" + std::to_string(seed));
}

fs::path data_dir(Options const &o, ExperimentConfig const &cfg)
{
  return o.data_dir.empty() ? seed_dir(cfg, cfg.seeds.front()) : fs::path(o.data_dir);
}

harness::SeedData load_seed_data(ExperimentConfig const &cfg, fs::path const &dir, bool with_eval)
{
  harness::SeedData d;
  d.train = data::load_dataset(dir / "train.plod");
  if (with_eval) {
    d.test = data::load_dataset(dir / "test.plod");
    for (auto k : cfg.data.ood_kinds) {
      d.ood.push_back(data::load_dataset(dir / ("ood-" + std::string(data::ood_kind_name(k)) + ".plod")));
    }
  }
  return d;
}

int cmd_generate(Options const &o)
{
  auto const cfg = resolve_config(o);
  for (auto seed : cfg.seeds) {
    auto const d = harness::make_seed_data(cfg, seed);
    auto const dir = seed_dir(cfg, seed);
    fs::create_directories(dir);
    data::save_dataset(d.train, dir / "train.plod");
    data::save_dataset(d.test, dir / "test.plod");
    for (std::size_t k = 0; k < d.ood.size(); ++k) {
      data::save_dataset(d.ood[k], dir / ("ood-" + std::string(data::ood_kind_name(cfg.data.ood_kinds[k])) + ".plod"));
    }
    std::cout << dir.string() << "\n";
  }
  return 0;
}

int cmd_train_ssfe(Options const &o)
{
  auto const cfg = resolve_config(o);
  auto const dir = data_dir(o, cfg);
  auto       ssfe_cfg = cfg.ssfe;
  ssfe_cfg.seed = harness::stage_seed(cfg.seeds.front(), 31);
  auto const train = data::load_dataset(dir / "train.plod");
  if (o.no_ssfe) {
    net::save_checkpoint(net::init_ssfe(ssfe_cfg.seed, ssfe_cfg.rotations), dir / "ssfe.ckpt");
  } else {
    auto const r = ssfe::train_ssfe(train, ssfe_cfg);
    net::save_checkpoint(r.params, dir / "ssfe.ckpt");
    write_text(dir / "ssfe_log.csv", ssfe::log_csv(r.log));
  }
  std::cout << (dir / "ssfe.ckpt").string() << "\n";
  return 0;
}

int cmd_finetune(Options const &o)
{
  auto const cfg = resolve_config(o);
  auto const dir = data_dir(o, cfg);
  auto       pll_cfg = cfg.pll;
  pll_cfg.seed = harness::stage_seed(cfg.seeds.front(), 32);
  auto const start = net::load_checkpoint(o.model.empty() ? dir / "ssfe.ckpt" : fs::path(o.model));
  auto const r = pll::finetune_pll(data::load_dataset(dir / "train.plod"), start, pll_cfg);
  net::save_checkpoint(r.params, dir / "pll.ckpt");
  pll::save_confidence(r.confidence, dir / "confidence.plcm");
  write_text(dir / "pll_log.csv", pll::log_csv(r.log));
  std::cout << (dir / "pll.ckpt").string() << "\n";
  return 0;
}

int cmd_score(Options const &o)
{
  auto const cfg = resolve_config(o);
  auto const dir = data_dir(o, cfg);
  auto const data = load_seed_data(cfg, dir, true);
  harness::TrainedModel model;
  model.params = net::load_checkpoint(o.model.empty() ? dir / "pll.ckpt" : fs::path(o.model));
  model.confidence = pll::load_confidence(o.confidence.empty() ? dir / "confidence.plcm" : fs::path(o.confidence));
  auto const run = harness::score_model(cfg, model, data, cfg.seeds.front(), "plood");
  write_text(dir / "scores.csv", harness::score_dump_csv(run));
  std::cout << (dir / "scores.csv").string() << "\n";
  return 0;
}

// Reads a score dump and reports AUPR-IN / FPR95 per OOD origin and kind.
int cmd_evaluate(Options const &o)
{
  auto const     cfg = resolve_config(o);
  fs::path const path = o.input.empty() ? data_dir(o, cfg) / "scores.csv" : fs::path(o.input);
  std::istringstream in(read_text(path));
  std::string        line;
  std::getline(in, line);
  if (line != "instance_id,origin,kind,score") { throw FormatError("unexpected score dump header in " + path.string()); }
  std::map<std::string, std::vector<double>>                       id;
  std::map<std::pair<std::string, std::string>, std::vector<double>> ood;
  while (std::getline(in, line)) {
    if (line.empty()) { continue; }
    auto const f = harness::split_list(line);
    if (f.size() != 4) { throw FormatError("malformed score row: " + line); }
    double const v = std::stod(f[3]);
    if (f[1] == "id-test") {
      id[f[2]].push_back(v);
    } else if (f[1].rfind("ood:", 0) == 0) {
      ood[{f[1].substr(4), f[2]}].push_back(v);
    } else {
      throw FormatError("unknown origin '" + f[1] + "'");
    }
  }
  nlohmann::json rows = nlohmann::json::array();
  for (auto const &[key, scores] : ood) {
    auto it = id.find(key.second);
    if (it == id.end()) { throw FormatError("no ID scores for kind " + key.second); }
    metrics::EvalInput const e{it->second, scores, true};
    double const             aupr = metrics::aupr_in(e), fpr = metrics::fpr95(e);
    rows.push_back({{"ood", key.first}, {"kind", key.second}, {"aupr_in", aupr}, {"fpr95", fpr}});
    std::cout << key.first << " " << key.second << " aupr_in=" << aupr << " fpr95=" << fpr << "\n";
  }
  nlohmann::json doc{{"schema_version", harness::kReportSchemaVersion}, {"source", path.string()}, {"metrics", rows}};
  write_text(path.parent_path() / "evaluation.json", doc.dump(2) + "\n");
  return 0;
}

std::set<harness::ReportFormat> parse_formats(std::string const &s)
{
  std::set<harness::ReportFormat> out;
  for (auto const &f : harness::split_list(s)) {
    out.insert(harness::parse_report_format(f));
  }
  return out;
}

int finish_report(harness::ScoreReport &report, Options const &o)
{
  auto const paths = harness::emit_report(report, report.config.out_dir, parse_formats(o.formats));
  for (auto const &[variant, acc] : report.accuracy_mean) {
    std::cout << "id_accuracy[" << variant << "] = " << acc << "\n";
  }
  for (auto const &e : report.summary) {
    std::cout << e.variant << " " << e.ood << " " << e.kind << " aupr_in=" << e.aupr_in_mean << "+-"
              << e.aupr_in_std << " fpr95=" << e.fpr95_mean << "+-" << e.fpr95_std << "\n";
  }
  for (auto const &p : paths) {
    std::cout << p.string() << "\n";
  }
  return 0;
}

int cmd_run_experiment(Options const &o)
{
  auto report = harness::run_experiment(resolve_config(o));
  return finish_report(report, o);
}

int cmd_run_ablation(Options const &o)
{
  auto report = harness::run_ablation(resolve_config(o), harness::parse_ablation(o.ablation));
  return finish_report(report, o);
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Partial-label OOD detection pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "output directory (overrides PLOOD_OUT_DIR and run.out_dir)");
  app.add_option("--seed-override", o.seed_override, "comma separated run seeds");
  app.add_option("--scores", o.scores, "comma separated score kinds");
  app.add_option("--glc-mode", o.glc_mode, "raw-mean or z-score")->check(CLI::IsMember({"raw-mean", "z-score"}));

  struct Command
  {
    char const *name, *help;
    int (*run)(Options const &);
  };
  Command const commands[] = {
    {"generate-data", "write train/test/OOD datasets per seed", cmd_generate},
    {"train-ssfe", "rotation pretraining on a seed directory", cmd_train_ssfe},
    {"finetune-pll", "partial-label fine-tune from a pretrained checkpoint", cmd_finetune},
    {"score", "dump per-instance scores for ID test and OOD sets", cmd_score},
    {"evaluate", "AUPR-IN and FPR95 from a score dump", cmd_evaluate},
    {"run-experiment", "full pipeline over all seeds", cmd_run_experiment},
    {"run-ablation", "score or SSFE ablation over all seeds", cmd_run_ablation},
  };
  std::map<CLI::App *, Command const *> dispatch;
  for (auto const &c : commands) {
    auto *sub = app.add_subcommand(c.name, c.help);
    sub->fallthrough();
    std::string const n = c.name;
    if (n == "train-ssfe" || n == "finetune-pll" || n == "score" || n == "evaluate") {
      sub->add_option("--data-dir", o.data_dir, "seed directory written by generate-data");
    }
    if (n == "train-ssfe") { sub->add_flag("--no-ssfe", o.no_ssfe, "write the untrained initialization instead"); }
    if (n == "finetune-pll" || n == "score") { sub->add_option("--model", o.model, "checkpoint path"); }
    if (n == "score") { sub->add_option("--confidence", o.confidence, "confidence matrix path"); }
    if (n == "evaluate") { sub->add_option("--input", o.input, "score dump CSV"); }
    if (n == "run-experiment" || n == "run-ablation") {
      sub->add_option("--formats", o.formats, "subset of json,csv,plotdata");
    }
    if (n == "run-ablation") {
      sub->add_option("--ablation", o.ablation, "score or ssfe")->check(CLI::IsMember({"score", "ssfe"}));
    }
    dispatch[sub] = &c;
  }

  CLI11_PARSE(app, argc, argv);

  Command const *cmd = nullptr;
  for (auto *sub : app.get_subcommands()) {
    cmd = dispatch.at(sub);
  }
  try {
    return cmd->run(o);
  } catch (StageError const &e) {
    std::cerr << "plood: " << e.what() << "\n";
  } catch (std::exception const &e) {
    std::cerr << "plood: [" << cmd->name << "] " << e.what() << "\n";
  }
  return 1;
}
