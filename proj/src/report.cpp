// SPDX-License-Identifier: Apache-2.0
#include "plood/binio.hpp"
#include "plood/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace plood::harness {

using nlohmann::json;

namespace {

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void strip_volatile(json &doc)
{
  if (doc.is_object()) {
    doc.erase("wall_ms");
    doc.erase("artifacts");
    for (auto &[k, v] : doc.items()) {
      strip_volatile(v);
    }
  } else if (doc.is_array()) {
    for (auto &v : doc) {
      strip_volatile(v);
    }
  }
}

json histogram(Eigen::VectorXd const &id, Eigen::VectorXd const &ood, Index bins)
{
  double lo = std::min(id.minCoeff(), ood.minCoeff());
  double hi = std::max(id.maxCoeff(), ood.maxCoeff());
  if (!(hi > lo)) { hi = lo + 1.0; }
  std::vector<double> edges;
  for (Index b = 0; b <= bins; ++b) {
    edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
  }
  auto count = [&](Eigen::VectorXd const &v) {
    std::vector<Index> c(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
      auto b = static_cast<Index>(std::floor((x - lo) / (hi - lo) * static_cast<double>(bins)));
      b = std::clamp<Index>(b, 0, bins - 1);
      ++c[static_cast<std::size_t>(b)];
    }
    return c;
  };
  return {{"edges", edges}, {"id_counts", count(id)}, {"ood_counts", count(ood)}};
}

} // namespace

json to_json(ScoreReport const &report)
{
  json runs = json::array();
  for (auto const &r : report.runs) {
    json metrics = json::array();
    for (auto const &m : r.metrics) {
      metrics.push_back({{"ood", m.ood},
                         {"kind", score::score_kind_name(m.kind)},
                         {"aupr_in", m.aupr_in},
                         {"fpr95", m.fpr95},
                         {"model_checksum", hex64(r.model_checksum)}});
    }
    runs.push_back({{"seed", r.seed},
                    {"variant", r.variant},
                    {"model_checksum", hex64(r.model_checksum)},
                    {"id_accuracy", r.id_accuracy},
                    {"glc", r.glc},
                    {"final_l_pl", r.final_l_pl},
                    {"wall_ms", r.wall_ms},
                    {"metrics", metrics}});
  }
  json summary = json::array();
  for (auto const &e : report.summary) {
    summary.push_back({{"variant", e.variant},
                       {"ood", e.ood},
                       {"kind", e.kind},
                       {"aupr_in_mean", e.aupr_in_mean},
                       {"aupr_in_std", e.aupr_in_std},
                       {"fpr95_mean", e.fpr95_mean},
                       {"fpr95_std", e.fpr95_std}});
  }
  json accuracy = json::object();
  for (auto const &[variant, mean] : report.accuracy_mean) {
    accuracy[variant] = {{"mean", mean}, {"std", report.accuracy_std.at(variant)}};
  }
  json deltas = json::array();
  for (auto const &d : report.deltas) {
    deltas.push_back({{"ood", d.ood},
                      {"kind", d.kind},
                      {"against", d.against},
                      {"delta_aupr_in", d.delta_aupr_in},
                      {"delta_fpr95", d.delta_fpr95}});
  }
  return {{"schema_version", report.schema_version},
          {"mode", report.mode},
          {"config", to_key_values(report.config)},
          {"runs", runs},
          {"summary", summary},
          {"id_accuracy", accuracy},
          {"deltas", deltas},
          {"wall_ms", report.wall_ms},
          {"artifacts", report.artifacts}};
}

std::string canonical_json(ScoreReport const &report) { return to_json(report).dump(2) + "\n"; }

std::uint64_t canonical_hash(json doc)
{
  strip_volatile(doc);
  std::string const text = doc.dump();
  return binio::fnv1a({reinterpret_cast<unsigned char const *>(text.data()), text.size()});
}

std::uint64_t canonical_hash(ScoreReport const &report) { return canonical_hash(to_json(report)); }

std::string report_csv(ScoreReport const &report)
{
  std::string out = "seed,variant,ood,kind,metric,value\n";
  for (auto const &r : report.runs) {
    std::string const prefix = std::to_string(r.seed) + "," + r.variant + ",";
    for (auto const &m : r.metrics) {
      std::string const head = prefix + m.ood + "," + score::score_kind_name(m.kind) + ",";
      out += head + "aupr_in," + fmt(m.aupr_in) + "\n";
      out += head + "fpr95," + fmt(m.fpr95) + "\n";
      out += head + "id_accuracy," + fmt(r.id_accuracy) + "\n";
    }
  }
  return out;
}

json plot_data(ScoreReport const &report)
{
  json hists = json::array();
  for (auto const &r : report.runs) {
    for (auto const &[key, ood_scores] : r.ood_scores) {
      auto const &[ood, kind] = key;
      json h = histogram(r.id_scores.at(kind), ood_scores, report.config.histogram_bins);
      h["seed"] = r.seed;
      h["variant"] = r.variant;
      h["ood"] = ood;
      h["kind"] = kind;
      hists.push_back(std::move(h));
    }
  }
  return {{"schema_version", report.schema_version}, {"histograms", hists}};
}

ReportFormat parse_report_format(std::string const &s)
{
  if (s == "json") { return ReportFormat::Json; }
  if (s == "csv") { return ReportFormat::Csv; }
  if (s == "plotdata") { return ReportFormat::PlotData; }
  throw ConfigError("unknown report format '" + s + "'");
}

std::vector<std::filesystem::path> emit_report(ScoreReport &report, std::filesystem::path const &dir,
                                               std::set<ReportFormat> const &formats)
{
  std::vector<std::filesystem::path> written;
  try {
    std::filesystem::create_directories(dir);
    std::map<ReportFormat, std::filesystem::path> paths;
    if (formats.count(ReportFormat::Json)) { paths[ReportFormat::Json] = dir / "report.json"; }
    if (formats.count(ReportFormat::Csv)) { paths[ReportFormat::Csv] = dir / "report.csv"; }
    if (formats.count(ReportFormat::PlotData)) { paths[ReportFormat::PlotData] = dir / "plotdata.json"; }
    for (auto const &[fmt_id, path] : paths) {
      char const *name = fmt_id == ReportFormat::Json ? "json" : fmt_id == ReportFormat::Csv ? "csv" : "plotdata";
      report.artifacts[name] = path.string();
    }
    for (auto const &[fmt_id, path] : paths) {
      std::string text;
      switch (fmt_id) {
      case ReportFormat::Json: text = canonical_json(report); break;
      case ReportFormat::Csv: text = report_csv(report); break;
      case ReportFormat::PlotData: text = plot_data(report).dump(2) + "\n"; break;
      }
      std::ofstream os(path, std::ios::binary);
      if (!os) { throw Error("cannot write " + path.string()); }
      written.push_back(path);
      os << text;
      if (!os) { throw Error("write failed for " + path.string()); }
    }
  } catch (std::filesystem::filesystem_error const &e) {
    for (auto const &p : written) {
      std::filesystem::remove(p);
    }
    throw StageError("report", e.what());
  } catch (std::exception const &e) {
    for (auto const &p : written) {
      std::filesystem::remove(p);
    }
    throw StageError("report", e.what());
  }
  return written;
}

std::string score_dump_csv(RunBlock const &run)
{
  std::string out = "instance_id,origin,kind,score\n";
  for (auto const &[kind, scores] : run.id_scores) {
    for (Index i = 0; i < scores.size(); ++i) {
      out += std::to_string(i) + ",id-test," + kind + "," + fmt(scores[i]) + "\n";
    }
  }
  for (auto const &[key, scores] : run.ood_scores) {
    for (Index i = 0; i < scores.size(); ++i) {
      out += std::to_string(i) + ",ood:" + key.first + "," + key.second + "," + fmt(scores[i]) + "\n";
    }
  }
  return out;
}

} // namespace plood::harness
