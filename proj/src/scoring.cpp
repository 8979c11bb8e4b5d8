// SPDX-License-Identifier: Apache-2.0
#include "plood/scoring.hpp"

namespace plood::score {

char const *glc_mode_name(GlcMode m) { return m == GlcMode::RawMean ? "raw-mean" : "z-score"; }

GlcMode parse_glc_mode(std::string const &s)
{
  if (s == "raw-mean") { return GlcMode::RawMean; }
  if (s == "z-score") { return GlcMode::ZScore; }
  throw ConfigError("unknown glc mode '" + s + "'");
}

char const *score_kind_name(ScoreKind k)
{
  switch (k) {
  case ScoreKind::PartialEnergy: return "PE";
  case ScoreKind::Energy: return "energy";
  case ScoreKind::JointEnergy: return "joint-energy";
  case ScoreKind::Entropy: return "entropy";
  case ScoreKind::Msp: return "msp";
  case ScoreKind::Odin: return "odin";
  }
  return "?";
}

std::vector<ScoreKind> all_score_kinds()
{
  return {ScoreKind::PartialEnergy, ScoreKind::Energy, ScoreKind::JointEnergy,
          ScoreKind::Entropy,       ScoreKind::Msp,    ScoreKind::Odin};
}

ScoreKind parse_score_kind(std::string const &s)
{
  for (auto k : all_score_kinds()) {
    if (s == score_kind_name(k)) { return k; }
  }
  throw ConfigError("unknown score kind '" + s + "'");
}

char const *energy_input_name(EnergyInput e) { return e == EnergyInput::Probabilities ? "probs" : "logits"; }

EnergyInput parse_energy_input(std::string const &s)
{
  if (s == "probs") { return EnergyInput::Probabilities; }
  if (s == "logits") { return EnergyInput::Logits; }
  throw ConfigError("unknown energy input '" + s + "'");
}

ScoreVector baseline_score(RowMatrix const &logits, ScoreKind kind, double temperature)
{
  if (!(temperature > 0.0)) { throw Error("baseline_score: temperature must be positive"); }
  ScoreVector out;
  out.kind = kind;
  switch (kind) {
  case ScoreKind::Energy: out.scores = temperature * logsumexp_rows(logits / temperature); break;
  case ScoreKind::JointEnergy: out.scores = logits.unaryExpr([](double v) { return softplus(v); }).rowwise().sum(); break;
  case ScoreKind::Entropy: {
    RowMatrix const p = softmax_rows(logits);
    out.scores = (p.array() * p.array().max(1e-300).log()).rowwise().sum();
    break;
  }
  case ScoreKind::Msp: out.scores = softmax_rows(logits).rowwise().maxCoeff(); break;
  case ScoreKind::Odin: out.scores = softmax_rows(logits / temperature).rowwise().maxCoeff(); break;
  case ScoreKind::PartialEnergy: throw Error("baseline_score: PE needs label confidence; use compute_score");
  }
  if (!out.scores.allFinite()) { throw Error(std::string("baseline_score: non-finite ") + score_kind_name(kind)); }
  return out;
}

ScoreVector compute_score(ScoreKind kind, RowMatrix const &logits, GlcVector const &glc, ScoreOptions const &opt)
{
  switch (kind) {
  case ScoreKind::PartialEnergy: {
    RowMatrix const energy =
      opt.pe_input == EnergyInput::Probabilities ? label_energy(softmax_rows(logits)) : label_energy(logits);
    return partial_energy(energy, glc).score;
  }
  case ScoreKind::Energy: return baseline_score(logits, kind, opt.energy_temperature);
  case ScoreKind::Odin: return baseline_score(logits, kind, opt.odin_temperature);
  default: return baseline_score(logits, kind);
  }
}

} // namespace plood::score
