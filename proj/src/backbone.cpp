// SPDX-License-Identifier: Apache-2.0
#include "plood/backbone.hpp"

#include "plood/error.hpp"
#include "plood/random.hpp"

#include <cmath>

namespace plood::net {

char const *phase_name(Phase p) { return p == Phase::Ssfe ? "ssfe" : "pll"; }

Phase parse_phase(std::string const &s)
{
  if (s == "ssfe") { return Phase::Ssfe; }
  if (s == "pll") { return Phase::Pll; }
  throw Error("unknown phase '" + s + "'");
}

char const *slot_name(Slot s)
{
  static constexpr char const *names[kSlotCount] = {"conv1.w", "conv1.b", "conv2.w", "conv2.b",
                                                    "rc.w",    "rc.b",    "ri.w",    "ri.b",
                                                    "rot.w",   "rot.b",   "pll.w",   "pll.b"};
  return names[static_cast<std::size_t>(s)];
}

bool BackboneParams::all_finite() const
{
  for (auto const &t : tensors) {
    if (!t.all_finite()) { return false; }
  }
  return true;
}

std::vector<Slot> trainable_slots(Phase phase)
{
  std::vector<Slot> out{Slot::Conv1W, Slot::Conv1B, Slot::Conv2W, Slot::Conv2B,
                        Slot::RcW,    Slot::RcB,    Slot::RiW,    Slot::RiB};
  if (phase == Phase::Ssfe) {
    out.insert(out.end(), {Slot::RotW, Slot::RotB});
  } else {
    out.insert(out.end(), {Slot::PllW, Slot::PllB});
  }
  return out;
}

namespace {

Tensor uniform(Shape shape, double bound, Rng rng)
{
  Tensor                                 t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < t.size(); ++i) {
    t[i] = dist(rng);
  }
  return t;
}

double he_bound(Index fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

} // namespace

BackboneParams init_ssfe(std::uint64_t seed, Index rotations)
{
  if (rotations < 2) { throw Error("backbone: need at least two rotations"); }
  BackboneParams p;
  p.phase = Phase::Ssfe;
  p.seed = seed;
  p.rotations = rotations;
  p[Slot::Conv1W] = uniform({kConv1Channels, 1, 3, 3}, he_bound(9), make_rng(seed, 1));
  p[Slot::Conv1B] = Tensor({kConv1Channels});
  p[Slot::Conv2W] = uniform({kConv2Channels, kConv1Channels, 3, 3}, he_bound(9 * kConv1Channels), make_rng(seed, 2));
  p[Slot::Conv2B] = Tensor({kConv2Channels});
  p[Slot::RcW] = uniform({kFlatDim, kHeadDim}, he_bound(kFlatDim), make_rng(seed, 3));
  p[Slot::RcB] = Tensor({kHeadDim});
  p[Slot::RiW] = uniform({kFlatDim, kHeadDim}, he_bound(kFlatDim), make_rng(seed, 4));
  p[Slot::RiB] = Tensor({kHeadDim});
  p[Slot::RotW] = uniform({kHeadDim, rotations}, he_bound(kHeadDim), make_rng(seed, 5));
  p[Slot::RotB] = Tensor({rotations});
  return p;
}

BackboneParams init_finetune(BackboneParams const &ssfe, Index classes, std::uint64_t seed)
{
  if (ssfe.phase != Phase::Ssfe) { throw Error("init_finetune: expected ssfe-phase parameters"); }
  if (classes < 2) { throw Error("init_finetune: need at least two classes"); }
  BackboneParams p = ssfe;
  p.phase = Phase::Pll;
  p.seed = seed;
  p.classes = classes;
  p[Slot::PllW] = uniform({kFeatureDim, classes}, 0.05, make_rng(seed, 101));
  p[Slot::PllB] = uniform({classes}, 0.05, make_rng(seed, 102));
  return p;
}

ExtractorNodes build_extractor(ad::Graph &g)
{
  ExtractorNodes n{};
  n.images = g.constant("images");
  n.params[0] = g.parameter(slot_name(Slot::Conv1W));
  n.params[1] = g.parameter(slot_name(Slot::Conv1B));
  auto x = g.max_pool2(g.relu(g.conv2d(n.images, n.params[0], n.params[1])));
  n.params[2] = g.parameter(slot_name(Slot::Conv2W));
  n.params[3] = g.parameter(slot_name(Slot::Conv2B));
  x = g.max_pool2(g.relu(g.conv2d(x, n.params[2], n.params[3])));
  auto const flat = g.reshape(x, {kFlatDim});
  n.params[4] = g.parameter(slot_name(Slot::RcW));
  n.params[5] = g.parameter(slot_name(Slot::RcB));
  n.h_rc = g.relu(g.add(g.matmul(flat, n.params[4]), n.params[5]));
  n.params[6] = g.parameter(slot_name(Slot::RiW));
  n.params[7] = g.parameter(slot_name(Slot::RiB));
  n.h_ri = g.relu(g.add(g.matmul(flat, n.params[6]), n.params[7]));
  n.h_ssfe = g.concat(n.h_rc, n.h_ri);
  return n;
}

std::array<ad::NodeId, 3> build_affine(ad::Graph &g, ad::NodeId features, std::string const &prefix)
{
  auto const w = g.parameter(prefix + ".w");
  auto const b = g.parameter(prefix + ".b");
  return {w, b, g.add(g.matmul(features, w), b)};
}

void bind_extractor(ad::Graph &g, ExtractorNodes const &nodes, BackboneParams const &params)
{
  for (std::size_t k = 0; k < nodes.params.size(); ++k) {
    g.bind(nodes.params[k], params[static_cast<Slot>(k)]);
  }
}

void check_images(Tensor const &images)
{
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != kImageSide || images.dim(3) != kImageSide) {
    throw Error("backbone: images must be Bx1x16x16, got " + to_string(images.shape()));
  }
}

FeaturePair extract_features(BackboneParams const &params, Tensor const &images)
{
  check_images(images);
  ad::Graph g;
  auto const n = build_extractor(g);
  bind_extractor(g, n, params);
  g.bind(n.images, images);
  g.forward(n.h_ssfe);
  return {g.value(n.h_rc).matrix(), g.value(n.h_ri).matrix(), g.value(n.h_ssfe).matrix()};
}

namespace {

RowMatrix affine(RowMatrix const &x, Tensor const &w, Tensor const &b, char const *what)
{
  if (w.rank() != 2 || x.cols() != w.dim(0) || b.size() != w.dim(1)) {
    throw Error(std::string(what) + ": feature width " + std::to_string(x.cols()) + " does not match weights " +
                to_string(w.shape()));
  }
  RowMatrix out = x * w.matrix();
  out.rowwise() += b.data().transpose();
  return out;
}

} // namespace

RowMatrix rotation_logits(BackboneParams const &params, RowMatrix const &h_rc)
{
  if (params.phase != Phase::Ssfe) { throw Error("rotation_logits: requires ssfe-phase parameters"); }
  return affine(h_rc, params[Slot::RotW], params[Slot::RotB], "rotation_logits");
}

RowMatrix pll_head(BackboneParams const &params, RowMatrix const &h_ssfe)
{
  if (params.phase != Phase::Pll) { throw Error("pll_logits: requires pll-phase parameters"); }
  return affine(h_ssfe, params[Slot::PllW], params[Slot::PllB], "pll_logits");
}

RowMatrix pll_logits(BackboneParams const &params, Tensor const &images)
{
  if (params.phase != Phase::Pll) { throw Error("pll_logits: requires pll-phase parameters"); }
  return pll_head(params, extract_features(params, images).h_ssfe);
}

RowMatrix pll_logits_batched(BackboneParams const &params, Tensor const &images, Index chunk)
{
  check_images(images);
  RowMatrix out(images.dim(0), params.classes);
  for (Index begin = 0; begin < images.dim(0); begin += chunk) {
    Index const end = std::min(images.dim(0), begin + chunk);
    out.middleRows(begin, end - begin) = pll_logits(params, slice_rows(images, begin, end));
  }
  return out;
}

Tensor slice_rows(Tensor const &t, Index begin, Index end)
{
  Shape shape = t.shape();
  Index const stride = t.size() / shape[0];
  shape[0] = end - begin;
  return Tensor(std::move(shape), t.data().segment(begin * stride, (end - begin) * stride));
}

Tensor gather_rows(Tensor const &t, std::vector<Index> const &rows)
{
  Shape shape = t.shape();
  Index const stride = t.size() / shape[0];
  shape[0] = static_cast<Index>(rows.size());
  Tensor out(std::move(shape));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.data().segment(static_cast<Index>(k) * stride, stride) = t.data().segment(rows[k] * stride, stride);
  }
  return out;
}

} // namespace plood::net
