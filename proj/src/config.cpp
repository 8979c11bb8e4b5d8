// SPDX-License-Identifier: Apache-2.0
#include "plood/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace plood::harness {

namespace {

std::string trim(std::string const &s)
{
  auto const b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) { return ""; }
  auto const e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string const &key, std::string const &v)
{
  T    out{};
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config: bad value '" + v + "' for " + key);
  }
  return out;
}

double parse_real(std::string const &key, std::string const &v)
{
  try {
    std::size_t  used = 0;
    double const d = std::stod(v, &used);
    if (used != v.size()) { throw ConfigError(""); }
    return d;
  } catch (std::exception const &) {
    throw ConfigError("config: bad value '" + v + "' for " + key);
  }
}

std::string fmt_real(double v)
{
  char buf[32];
  auto const r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <typename T, typename F>
std::string join(std::vector<T> const &items, F name)
{
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += (i ? "," : "") + std::string(name(items[i]));
  }
  return out;
}

} // namespace

std::vector<std::string> split_list(std::string const &s)
{
  std::vector<std::string> out;
  std::stringstream        ss(s);
  std::string              item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) { out.push_back(item); }
  }
  return out;
}

void ExperimentConfig::validate() const
{
  if (data.classes < 2) { throw ConfigError("dataset.classes must be >= 2"); }
  if (data.n_train < data.classes || data.n_test < data.classes) {
    throw ConfigError("dataset.n_train and dataset.n_test must be >= dataset.classes");
  }
  if (data.n_ood < 1) { throw ConfigError("dataset.n_ood must be >= 1"); }
  if (!(data.partial_rate >= 0.0 && data.partial_rate <= 1.0)) { throw ConfigError("dataset.partial_rate must lie in [0,1]"); }
  if (!(data.pixel_noise >= 0.0)) { throw ConfigError("dataset.pixel_noise must be >= 0"); }
  if (data.ood_kinds.empty()) { throw ConfigError("dataset.ood_kinds must be non-empty"); }
  ssfe.validate();
  pll.validate();
  if (kinds.empty()) { throw ConfigError("score.kinds must be non-empty"); }
  if (!(score.energy_temperature > 0.0 && score.odin_temperature > 0.0)) {
    throw ConfigError("score temperatures must be positive");
  }
  if (histogram_bins < 1) { throw ConfigError("report.histogram_bins must be >= 1"); }
  if (seeds.empty()) { throw ConfigError("run.seeds must be non-empty"); }
}

void set_key(ExperimentConfig &cfg, std::string const &key, std::string const &v)
{
  if (key == "dataset.classes") {
    cfg.data.classes = parse_number<Index>(key, v);
  } else if (key == "dataset.n_train") {
    cfg.data.n_train = parse_number<Index>(key, v);
  } else if (key == "dataset.n_test") {
    cfg.data.n_test = parse_number<Index>(key, v);
  } else if (key == "dataset.n_ood") {
    cfg.data.n_ood = parse_number<Index>(key, v);
  } else if (key == "dataset.partial_rate") {
    cfg.data.partial_rate = parse_real(key, v);
  } else if (key == "dataset.pixel_noise") {
    cfg.data.pixel_noise = parse_real(key, v);
  } else if (key == "dataset.ood_kinds") {
    cfg.data.ood_kinds.clear();
    for (auto const &s : split_list(v)) {
      cfg.data.ood_kinds.push_back(data::parse_ood_kind(s));
    }
  } else if (key == "ssfe.alpha") {
    cfg.ssfe.alpha = parse_real(key, v);
  } else if (key == "ssfe.rotations") {
    cfg.ssfe.rotations = parse_number<Index>(key, v);
  } else if (key == "ssfe.epochs") {
    cfg.ssfe.epochs = parse_number<Index>(key, v);
  } else if (key == "ssfe.lr") {
    cfg.ssfe.lr = parse_real(key, v);
  } else if (key == "ssfe.batch_size") {
    cfg.ssfe.batch_size = parse_number<Index>(key, v);
  } else if (key == "ssfe.distance") {
    cfg.ssfe.distance = v;
  } else if (key == "pll.epochs") {
    cfg.pll.epochs = parse_number<Index>(key, v);
  } else if (key == "pll.lr") {
    cfg.pll.lr = parse_real(key, v);
  } else if (key == "pll.batch_size") {
    cfg.pll.batch_size = parse_number<Index>(key, v);
  } else if (key == "pll.cadence") {
    cfg.pll.cadence = pll::parse_cadence(v);
  } else if (key == "pll.update_input") {
    cfg.pll.update_input = pll::parse_update_input(v);
  } else if (key == "score.kinds") {
    cfg.kinds.clear();
    for (auto const &s : split_list(v)) {
      cfg.kinds.push_back(score::parse_score_kind(s));
    }
  } else if (key == "score.glc_mode") {
    cfg.glc_mode = score::parse_glc_mode(v);
  } else if (key == "score.pe_input") {
    cfg.score.pe_input = score::parse_energy_input(v);
  } else if (key == "score.energy_temperature") {
    cfg.score.energy_temperature = parse_real(key, v);
  } else if (key == "score.odin_temperature") {
    cfg.score.odin_temperature = parse_real(key, v);
  } else if (key == "report.histogram_bins") {
    cfg.histogram_bins = parse_number<Index>(key, v);
  } else if (key == "run.seeds") {
    cfg.seeds.clear();
    for (auto const &s : split_list(v)) {
      cfg.seeds.push_back(parse_number<std::uint64_t>(key, s));
    }
  } else if (key == "run.out_dir") {
    cfg.out_dir = v;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::string const &text, ExperimentConfig cfg)
{
  std::stringstream ss(text);
  std::string       line;
  int               lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') { continue; }
    auto const eq = line.find('=');
    if (eq == std::string::npos) { throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value"); }
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(std::filesystem::path const &path)
{
  std::ifstream is(path);
  if (!is) { throw ConfigError("cannot read config " + path.string()); }
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

std::map<std::string, std::string> to_key_values(ExperimentConfig const &cfg)
{
  return {
    {"dataset.classes", std::to_string(cfg.data.classes)},
    {"dataset.n_train", std::to_string(cfg.data.n_train)},
    {"dataset.n_test", std::to_string(cfg.data.n_test)},
    {"dataset.n_ood", std::to_string(cfg.data.n_ood)},
    {"dataset.partial_rate", fmt_real(cfg.data.partial_rate)},
    {"dataset.pixel_noise", fmt_real(cfg.data.pixel_noise)},
    {"dataset.ood_kinds", join(cfg.data.ood_kinds, data::ood_kind_name)},
    {"ssfe.alpha", fmt_real(cfg.ssfe.alpha)},
    {"ssfe.rotations", std::to_string(cfg.ssfe.rotations)},
    {"ssfe.epochs", std::to_string(cfg.ssfe.epochs)},
    {"ssfe.lr", fmt_real(cfg.ssfe.lr)},
    {"ssfe.batch_size", std::to_string(cfg.ssfe.batch_size)},
    {"ssfe.distance", cfg.ssfe.distance},
    {"pll.epochs", std::to_string(cfg.pll.epochs)},
    {"pll.lr", fmt_real(cfg.pll.lr)},
    {"pll.batch_size", std::to_string(cfg.pll.batch_size)},
    {"pll.cadence", pll::cadence_name(cfg.pll.cadence)},
    {"pll.update_input", pll::update_input_name(cfg.pll.update_input)},
    {"score.kinds", join(cfg.kinds, score::score_kind_name)},
    {"score.glc_mode", score::glc_mode_name(cfg.glc_mode)},
    {"score.pe_input", score::energy_input_name(cfg.score.pe_input)},
    {"score.energy_temperature", fmt_real(cfg.score.energy_temperature)},
    {"score.odin_temperature", fmt_real(cfg.score.odin_temperature)},
    {"report.histogram_bins", std::to_string(cfg.histogram_bins)},
    {"run.seeds", join(cfg.seeds, [](std::uint64_t s) { return std::to_string(s); })},
    {"run.out_dir", cfg.out_dir},
  };
}

std::string to_config_text(ExperimentConfig const &cfg)
{
  std::string out;
  for (auto const &[k, v] : to_key_values(cfg)) {
    out += k + " = " + v + "\n";
  }
  return out;
}

} // namespace plood::harness
