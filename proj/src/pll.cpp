// SPDX-License-Identifier: Apache-2.0
#include "plood/pll.hpp"

#include "plood/binio.hpp"
#include "plood/optim.hpp"
#include "plood/random.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace plood::pll {

bool ConfidenceMatrix::valid(double tol) const
{
  if (mask.rows() != values.rows() || mask.cols() != values.cols()) { return false; }
  if (!values.allFinite() || (values.array() < 0.0).any()) { return false; }
  if ((values.array() != 0.0 && !mask).any()) { return false; }
  return ((values.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

ConfidenceMatrix init_confidence(data::MaskMatrix const &mask)
{
  ConfidenceMatrix c{RowMatrix::Zero(mask.rows(), mask.cols()), mask};
  for (Index i = 0; i < mask.rows(); ++i) {
    Index const k = mask.row(i).count();
    if (k == 0) { throw Error("init_confidence: empty candidate set at row " + std::to_string(i)); }
    c.values.row(i) = mask.row(i).cast<double>().matrix() / static_cast<double>(k);
  }
  return c;
}

void PllConfig::validate() const
{
  if (epochs < 0 || batch_size < 1) { throw ConfigError("pll: epochs must be >= 0 and batch size >= 1"); }
  if (!(lr > 0.0)) { throw ConfigError("pll: learning rate must be positive"); }
}

char const *update_input_name(UpdateInput u) { return u == UpdateInput::Probabilities ? "probs" : "logits"; }

UpdateInput parse_update_input(std::string const &s)
{
  if (s == "probs") { return UpdateInput::Probabilities; }
  if (s == "logits") { return UpdateInput::Logits; }
  throw ConfigError("unknown confidence update input '" + s + "'");
}

char const *cadence_name(UpdateCadence c) { return c == UpdateCadence::Epoch ? "epoch" : "step"; }

UpdateCadence parse_cadence(std::string const &s)
{
  if (s == "epoch") { return UpdateCadence::Epoch; }
  if (s == "step") { return UpdateCadence::Step; }
  throw ConfigError("unknown update cadence '" + s + "'");
}

PllGraph::PllGraph()
{
  ext_ = net::build_extractor(g_);
  auto const head = net::build_affine(g_, ext_.h_ssfe, "pll");
  w_ = head[0];
  b_ = head[1];
  logits_ = head[2];
  probs_ = g_.softmax(logits_);
  mask_ = g_.constant("pl.mask");
  scale_ = g_.constant("pl.scale");
  l_pl_ = g_.mul(g_.mean(g_.mul(g_.log(probs_, kProbFloor), mask_)), scale_);
  g_.mark_output(logits_, "logits");
  g_.mark_output(l_pl_, "l_pl");
}

std::vector<ad::NodeId> PllGraph::param_nodes() const
{
  std::vector<ad::NodeId> out(ext_.params.begin(), ext_.params.end());
  out.push_back(w_);
  out.push_back(b_);
  return out;
}

void PllGraph::forward(Tensor const &images, RowMatrix const &confidence_rows)
{
  net::check_images(images);
  if (confidence_rows.rows() != images.dim(0)) { throw Error("pll: confidence rows do not match the batch"); }
  g_.bind(ext_.images, images);
  g_.bind(mask_, from_matrix(-confidence_rows));
  g_.bind(scale_, Tensor({1}, {static_cast<double>(confidence_rows.cols())}));
  g_.forward(l_pl_);
}

namespace {

double mean_row_max(ConfidenceMatrix const &c) { return c.values.rowwise().maxCoeff().mean(); }

RowMatrix softmax_rows(RowMatrix m)
{
  for (Index r = 0; r < m.rows(); ++r) {
    m.row(r).array() -= m.row(r).maxCoeff();
    m.row(r) = m.row(r).array().exp();
    m.row(r) /= m.row(r).sum();
  }
  return m;
}

} // namespace

PllResult finetune_pll(data::LabeledImageSet const &dataset, net::BackboneParams const &start, PllConfig const &cfg,
                       EpochHook const &on_epoch)
{
  cfg.validate();
  if (dataset.size() == 0) { throw Error("finetune_pll: empty dataset"); }
  if (dataset.origin == data::Origin::Ood) { throw Error("finetune_pll: needs an ID training set"); }

  PllResult result{net::init_finetune(start, dataset.classes, cfg.seed), init_confidence(dataset.candidates), {}};
  auto const          slots = net::trainable_slots(net::Phase::Pll);
  std::vector<Tensor> working;
  for (auto s : slots) {
    working.push_back(result.params[s]);
  }
  ad::OptimState state({.lr = cfg.lr}, working);

  PllGraph           graph;
  auto const         nodes = graph.param_nodes();
  std::vector<Index> order(static_cast<std::size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), Index{0});
  auto &C = result.confidence;

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto const t0 = std::chrono::steady_clock::now();
    Rng        rng = make_rng(cfg.seed, 0x911E0000ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    PllLogRow row{.epoch = epoch};
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t const  end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
      RowMatrix conf(static_cast<Index>(rows.size()), C.cols());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        conf.row(static_cast<Index>(k)) = C.values.row(rows[k]);
      }
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        graph.graph().bind(nodes[k], working[k]);
      }
      graph.forward(net::gather_rows(dataset.images, rows), conf);
      row.l_pl += graph.l_pl() * static_cast<double>(rows.size()) / static_cast<double>(order.size());

      if (cfg.cadence == UpdateCadence::Step) {
        ConfidenceMatrix sub{conf, data::MaskMatrix(static_cast<Index>(rows.size()), C.cols())};
        for (std::size_t k = 0; k < rows.size(); ++k) {
          sub.mask.row(static_cast<Index>(k)) = C.mask.row(rows[k]);
        }
        RowMatrix const scores = cfg.update_input == UpdateInput::Probabilities ? graph.probs() : graph.logits();
        sub = update_confidence(sub, scores);
        for (std::size_t k = 0; k < rows.size(); ++k) {
          C.values.row(rows[k]) = sub.values.row(static_cast<Index>(k));
        }
      }

      auto const          grads = ad::backward(graph.graph(), graph.loss(), Tensor({1}, {1.0}));
      std::vector<Tensor> g;
      for (auto id : nodes) {
        g.push_back(grads[id]);
      }
      ad::optim_step(working, g, state);
    }

    for (std::size_t k = 0; k < slots.size(); ++k) {
      result.params[slots[k]] = working[k];
    }
    if (cfg.cadence == UpdateCadence::Epoch) {
      RowMatrix const logits = net::pll_logits_batched(result.params, dataset.images);
      C = cfg.update_input == UpdateInput::Probabilities ? update_confidence(C, softmax_rows(logits))
                                                         : update_confidence(C, logits);
    }
    row.mean_max_confidence = mean_row_max(C);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    if (on_epoch) { on_epoch(epoch, C); }
  }
  if (!result.params.all_finite()) { throw Error("finetune_pll: parameters diverged"); }
  return result;
}

std::string log_csv(std::vector<PllLogRow> const &log)
{
  std::string out = "epoch,l_pl,mean_max_confidence,wall_ms\n";
  char        buf[160];
  for (auto const &r : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.3f\n", static_cast<long long>(r.epoch), r.l_pl,
                  r.mean_max_confidence, r.wall_ms);
    out += buf;
  }
  return out;
}

namespace {
constexpr std::string_view kMagic = "PLCM";
constexpr std::uint32_t    kVersion = 1;
} // namespace

void save_confidence(ConfidenceMatrix const &c, std::filesystem::path const &path)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) { throw Error("cannot write confidence matrix " + path.string()); }
  binio::write_header(os, kMagic, kVersion, {{"N", c.rows()}, {"q", c.cols()}});
  binio::write_f64(os, {c.values.data(), static_cast<std::size_t>(c.values.size())});
  Index const       nb = (c.cols() + 7) / 8;
  std::vector<char> row(static_cast<std::size_t>(nb));
  for (Index i = 0; i < c.rows(); ++i) {
    std::fill(row.begin(), row.end(), 0);
    for (Index j = 0; j < c.cols(); ++j) {
      if (c.mask(i, j)) { row[static_cast<std::size_t>(j / 8)] |= static_cast<char>(1 << (j % 8)); }
    }
    os.write(row.data(), nb);
  }
  if (!os) { throw Error("write failed for confidence matrix " + path.string()); }
}

ConfidenceMatrix load_confidence(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) { throw Error("cannot open confidence matrix " + path.string()); }
  auto const h = binio::read_header(is, kMagic, kVersion);
  Index      n = 0, q = 0;
  try {
    n = h.at("N").get<Index>();
    q = h.at("q").get<Index>();
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("confidence header: ") + e.what());
  }
  ConfidenceMatrix c{RowMatrix(n, q), data::MaskMatrix::Constant(n, q, false)};
  binio::read_f64(is, {c.values.data(), static_cast<std::size_t>(c.values.size())}, "confidence values");
  Index const       nb = (q + 7) / 8;
  std::vector<char> row(static_cast<std::size_t>(nb));
  for (Index i = 0; i < n; ++i) {
    binio::read_exact(is, row.data(), static_cast<std::size_t>(nb), "candidate masks");
    for (Index j = 0; j < q; ++j) {
      c.mask(i, j) = (row[static_cast<std::size_t>(j / 8)] >> (j % 8)) & 1;
    }
  }
  binio::expect_eof(is);
  return c;
}

} // namespace plood::pll
