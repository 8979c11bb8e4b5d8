// SPDX-License-Identifier: Apache-2.0
#include "plood/ssfe.hpp"

#include "plood/optim.hpp"
#include "plood/random.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

namespace plood::ssfe {

double loss_ssfe(double l_rc, double l_ri, double alpha)
{
  if (!(alpha >= 0.0 && alpha <= 1.0)) { throw Error("loss_ssfe: alpha must lie in [0,1]"); }
  return alpha * l_rc + (1.0 - alpha) * l_ri;
}

RotationBatch make_rotation_batch(Tensor const &images, std::vector<Index> const &sources, Index rotations)
{
  net::check_images(images);
  Index const   side = net::kImageSide, px = side * side;
  RotationBatch b;
  b.rotations = rotations;
  b.sources = sources;
  b.images = Tensor({static_cast<Index>(sources.size()) * rotations, 1, side, side});
  Index row = 0;
  for (Index s : sources) {
    Eigen::Map<data::Image const> src(images.data().data() + s * px, side, side);
    for (Index r = 1; r <= rotations; ++r, ++row) {
      Eigen::Map<data::Image>(b.images.data().data() + row * px, side, side) = data::rotate(src, r);
      b.rotation_labels.push_back(r);
    }
  }
  return b;
}

void SsfeConfig::validate() const
{
  if (!(alpha >= 0.0 && alpha <= 1.0)) { throw ConfigError("ssfe: alpha must lie in [0,1]"); }
  if (epochs < 0 || batch_size < 1) { throw ConfigError("ssfe: epochs must be >= 0 and batch size >= 1"); }
  if (!(lr > 0.0)) { throw ConfigError("ssfe: learning rate must be positive"); }
  if (rotations != data::kRotations) { throw ConfigError("ssfe: only R=4 grid rotations are supported"); }
  if (distance != "sq-euclidean") { throw ConfigError("ssfe: unknown distance '" + distance + "'"); }
}

SsfeGraph::SsfeGraph()
{
  ext_ = net::build_extractor(g_);
  auto const head = net::build_affine(g_, ext_.h_rc, "rot");
  rot_w_ = head[0];
  rot_b_ = head[1];
  probs_ = g_.softmax(head[2]);
  auto const logp = g_.log(probs_, kProbFloor);
  rc_mask_ = g_.constant("rc.mask");
  rc_scale_ = g_.constant("rc.scale");
  l_rc_ = g_.mul(g_.mean(g_.mul(logp, rc_mask_)), rc_scale_);
  centering_ = g_.constant("ri.centering");
  ri_scale_ = g_.constant("ri.scale");
  auto const dev = g_.matmul(centering_, ext_.h_ri);
  l_ri_ = g_.mul(g_.mean(g_.mul(dev, dev)), ri_scale_);
  alpha_ = g_.constant("alpha");
  beta_ = g_.constant("one_minus_alpha");
  l_ssfe_ = g_.add(g_.mul(l_rc_, alpha_), g_.mul(l_ri_, beta_));
  g_.mark_output(probs_, "probs");
  g_.mark_output(l_rc_, "l_rc");
  g_.mark_output(l_ri_, "l_ri");
  g_.mark_output(l_ssfe_, "l_ssfe");
}

std::vector<ad::NodeId> SsfeGraph::param_nodes() const
{
  std::vector<ad::NodeId> out(ext_.params.begin(), ext_.params.end());
  out.push_back(rot_w_);
  out.push_back(rot_b_);
  return out;
}

void SsfeGraph::bind_params(net::BackboneParams const &params)
{
  net::bind_extractor(g_, ext_, params);
  g_.bind(rot_w_, params[net::Slot::RotW]);
  g_.bind(rot_b_, params[net::Slot::RotB]);
}

void SsfeGraph::forward(RotationBatch const &batch, double alpha)
{
  Index const R = batch.rotations;
  Index const rows = batch.images.dim(0);
  g_.bind(ext_.images, batch.images);
  g_.forward(probs_);

  weights_ = rotation_weights(g_.value(probs_).matrix(), batch.rotation_labels);
  Tensor mask({rows, R});
  for (Index i = 0; i < rows; ++i) {
    mask.matrix()(i, batch.rotation_labels[static_cast<std::size_t>(i)] - 1) = -weights_[i];
  }
  g_.bind(rc_mask_, std::move(mask));
  g_.bind(rc_scale_, Tensor({1}, {static_cast<double>(R)}));

  RowMatrix centering = RowMatrix::Identity(rows, rows);
  for (Index i = 0; i < rows; i += R) {
    centering.block(i, i, R, R).array() -= 1.0 / static_cast<double>(R);
  }
  g_.bind(centering_, from_matrix(centering));
  g_.bind(ri_scale_, Tensor({1}, {static_cast<double>(net::kHeadDim)}));
  g_.bind(alpha_, Tensor({1}, {alpha}));
  g_.bind(beta_, Tensor({1}, {1.0 - alpha}));
  g_.forward(l_ssfe_);
}

SsfeResult train_ssfe(data::LabeledImageSet const &dataset, SsfeConfig const &cfg)
{
  cfg.validate();
  if (dataset.size() == 0) { throw Error("train_ssfe: empty dataset"); }

  SsfeResult result{net::init_ssfe(cfg.seed, cfg.rotations), {}};
  auto const slots = net::trainable_slots(net::Phase::Ssfe);
  std::vector<Tensor> working;
  for (auto s : slots) {
    working.push_back(result.params[s]);
  }
  ad::OptimState state({.lr = cfg.lr}, working);

  SsfeGraph  graph;
  auto const nodes = graph.param_nodes();
  std::vector<Index> order(static_cast<std::size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), Index{0});

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto const t0 = std::chrono::steady_clock::now();
    Rng        rng = make_rng(cfg.seed, 0x55FE0000ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    SsfeLogRow row{.epoch = epoch};
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t const end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Index> sources(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      auto const batch = make_rotation_batch(dataset.images, sources, cfg.rotations);

      for (std::size_t k = 0; k < nodes.size(); ++k) {
        graph.graph().bind(nodes[k], working[k]);
      }
      graph.forward(batch, cfg.alpha);
      double const share = static_cast<double>(end - begin) / static_cast<double>(order.size());
      row.l_rc += share * graph.l_rc();
      row.l_ri += share * graph.l_ri();
      row.l_ssfe += share * graph.l_ssfe();

      auto const          grads = ad::backward(graph.graph(), graph.loss(), Tensor({1}, {1.0}));
      std::vector<Tensor> g;
      for (auto id : nodes) {
        g.push_back(grads[id]);
      }
      ad::optim_step(working, g, state);
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
  }

  for (std::size_t k = 0; k < slots.size(); ++k) {
    result.params[slots[k]] = std::move(working[k]);
  }
  if (!result.params.all_finite()) { throw Error("train_ssfe: parameters diverged"); }
  return result;
}

std::string log_csv(std::vector<SsfeLogRow> const &log)
{
  std::string out = "epoch,l_rc,l_ri,l_ssfe,wall_ms\n";
  char        buf[160];
  for (auto const &r : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.3f\n", static_cast<long long>(r.epoch), r.l_rc, r.l_ri,
                  r.l_ssfe, r.wall_ms);
    out += buf;
  }
  return out;
}

} // namespace plood::ssfe
