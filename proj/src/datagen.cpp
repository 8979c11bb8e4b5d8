// SPDX-License-Identifier: Apache-2.0
#include "plood/datagen.hpp"

#include "plood/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace plood::data {

namespace {
constexpr Index kSide = 16;
constexpr double kCenter = (kSide - 1) / 2.0;
} // namespace

char const *origin_name(Origin o)
{
  switch (o) {
  case Origin::IdTrain: return "id-train";
  case Origin::IdTest: return "id-test";
  case Origin::Ood: return "ood";
  }
  return "?";
}

Origin parse_origin(std::string const &s)
{
  for (Origin o : {Origin::IdTrain, Origin::IdTest, Origin::Ood}) {
    if (s == origin_name(o)) { return o; }
  }
  throw Error("unknown origin '" + s + "'");
}

char const *ood_kind_name(OodKind k)
{
  switch (k) {
  case OodKind::Checkerboard: return "checkerboard";
  case OodKind::Blob: return "blob";
  case OodKind::UniformNoise: return "uniform-noise";
  case OodKind::StripesOffgrid: return "stripes-offgrid";
  }
  return "?";
}

std::vector<OodKind> all_ood_kinds()
{
  return {OodKind::Checkerboard, OodKind::Blob, OodKind::UniformNoise, OodKind::StripesOffgrid};
}

OodKind parse_ood_kind(std::string const &s)
{
  for (OodKind k : all_ood_kinds()) {
    if (s == ood_kind_name(k)) { return k; }
  }
  throw Error("unknown OOD kind '" + s + "'");
}

GlyphSpec GlyphSpec::standard(Index q, double pixel_noise)
{
  if (q < 2) { throw Error("glyph spec: need at least two classes"); }
  if (!(pixel_noise >= 0.0)) { throw Error("glyph spec: pixel noise must be non-negative"); }
  GlyphSpec spec;
  spec.pixel_noise = pixel_noise;
  for (Index i = 0; i < q; ++i) {
    spec.classes.push_back({static_cast<GlyphFamily>(i % 6), 15.0 * static_cast<double>(i / 6)});
  }
  return spec;
}

Image LabeledImageSet::image(Index i) const
{
  return Eigen::Map<Image const>(images.data().data() + i * kSide * kSide, kSide, kSide);
}

namespace {

bool inside(GlyphFamily family, double u, double v)
{
  auto in = [](double x, double lo, double hi) { return x >= lo && x <= hi; };
  switch (family) {
  case GlyphFamily::Bar: return std::abs(v) <= 1.1 && std::abs(u) <= 6.0;
  case GlyphFamily::Corner: return (in(u, -5.0, -3.0) && in(v, -5.0, 5.0)) || (in(u, -5.0, 5.0) && in(v, 3.0, 5.0));
  case GlyphFamily::Cross:
    return (std::abs(u) <= 1.1 && std::abs(v) <= 6.0) || (std::abs(v) <= 1.1 && std::abs(u) <= 6.0);
  case GlyphFamily::Ring: {
    double const r = std::hypot(u, v);
    return r >= 3.5 && r <= 5.8;
  }
  case GlyphFamily::Tee: return (in(v, -6.0, -4.0) && std::abs(u) <= 6.0) || (std::abs(u) <= 1.1 && in(v, -6.0, 6.0));
  case GlyphFamily::Wedge: return in(v, -5.0, 5.0) && std::abs(u) <= (v + 5.0) * 0.6;
  }
  return false;
}

void add_noise(Eigen::Ref<Image> img, double sigma, Rng &rng)
{
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Index k = 0; k < img.size(); ++k) {
      img.data()[k] += noise(rng);
    }
  }
  img = img.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::Map<Image> image_slot(Tensor &images, Index i)
{
  return Eigen::Map<Image>(images.data().data() + i * kSide * kSide, kSide, kSide);
}

} // namespace

Image render_glyph(GlyphClass const &glyph)
{
  double const a = glyph.angle_deg * std::numbers::pi / 180.0;
  double const c = std::cos(a), s = std::sin(a);
  Image        img = Image::Zero(kSide, kSide);
  for (Index y = 0; y < kSide; ++y) {
    for (Index x = 0; x < kSide; ++x) {
      double const u0 = static_cast<double>(x) - kCenter, v0 = static_cast<double>(y) - kCenter;
      double const u = c * u0 + s * v0, v = -s * u0 + c * v0;
      if (inside(glyph.family, u, v)) { img(y, x) = 1.0; }
    }
  }
  return img;
}

LabeledImageSet generate_id_dataset(GlyphSpec const &spec, Index n, std::uint64_t seed, Origin origin,
                                    double partial_rate)
{
  Index const q = spec.num_classes();
  if (q < 2) { throw Error("generate_id_dataset: need at least two classes"); }
  if (n < q) { throw Error("generate_id_dataset: n=" + std::to_string(n) + " is smaller than q=" + std::to_string(q)); }
  if (origin == Origin::Ood) { throw Error("generate_id_dataset: origin must be an ID tag"); }

  std::vector<Image> templates;
  for (auto const &g : spec.classes) {
    templates.push_back(render_glyph(g));
  }

  std::vector<std::uint16_t> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(i % q);
  }
  Rng order = make_rng(seed, 0xD00D);
  std::shuffle(labels.begin(), labels.end(), order);

  LabeledImageSet set;
  set.images = Tensor({n, 1, kSide, kSide});
  for (Index i = 0; i < n; ++i) {
    Rng  rng = make_rng(seed, static_cast<std::uint64_t>(i));
    auto img = image_slot(set.images, i);
    img = templates[labels[static_cast<std::size_t>(i)]];
    add_noise(img, spec.pixel_noise, rng);
  }
  set.true_labels = std::move(labels);
  set.candidates = assign_candidate_labels(set.true_labels, q, partial_rate, mix_seed(seed, 0xCA4D));
  set.origin = origin;
  set.seed = seed;
  set.partial_rate = partial_rate;
  set.classes = q;
  return set;
}

LabeledImageSet generate_ood_dataset(OodKind kind, Index n, std::uint64_t seed, double pixel_noise)
{
  if (n < 1) { throw Error("generate_ood_dataset: n must be positive"); }
  LabeledImageSet set;
  set.images = Tensor({n, 1, kSide, kSide});
  for (Index i = 0; i < n; ++i) {
    Rng                                    rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto                                   img = image_slot(set.images, i);
    double                                 sigma = pixel_noise;
    switch (kind) {
    case OodKind::Checkerboard: {
      Index const  cell = 2 + static_cast<Index>(unit(rng) * 3.0);
      Index const  ox = static_cast<Index>(unit(rng) * static_cast<double>(cell));
      Index const  oy = static_cast<Index>(unit(rng) * static_cast<double>(cell));
      double const lo = 0.2 * unit(rng), hi = 0.7 + 0.3 * unit(rng);
      for (Index y = 0; y < kSide; ++y) {
        for (Index x = 0; x < kSide; ++x) {
          img(y, x) = (((x + ox) / cell + (y + oy) / cell) % 2) ? hi : lo;
        }
      }
      break;
    }
    case OodKind::Blob: {
      double const cx = 4.0 + 7.0 * unit(rng), cy = 4.0 + 7.0 * unit(rng);
      double const w = 1.5 + 2.0 * unit(rng), amp = 0.7 + 0.3 * unit(rng);
      for (Index y = 0; y < kSide; ++y) {
        for (Index x = 0; x < kSide; ++x) {
          double const d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          img(y, x) = amp * std::exp(-d2 / (2.0 * w * w));
        }
      }
      break;
    }
    case OodKind::UniformNoise:
      for (Index k = 0; k < img.size(); ++k) {
        img.data()[k] = unit(rng);
      }
      sigma = 0.0;
      break;
    case OodKind::StripesOffgrid: {
      // Angles stay at least 15 degrees away from either grid axis.
      double const angle = (15.0 + 60.0 * unit(rng)) * std::numbers::pi / 180.0;
      double const period = 3.0 + 3.0 * unit(rng), phase = 2.0 * std::numbers::pi * unit(rng);
      double const c = std::cos(angle), s = std::sin(angle);
      for (Index y = 0; y < kSide; ++y) {
        for (Index x = 0; x < kSide; ++x) {
          img(y, x) = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (c * x + s * y) / period + phase);
        }
      }
      break;
    }
    }
    add_noise(img, sigma, rng);
  }
  set.true_labels.assign(static_cast<std::size_t>(n), kNoLabel);
  set.candidates = MaskMatrix::Constant(n, 0, false);
  set.origin = Origin::Ood;
  set.seed = seed;
  return set;
}

LabeledImageSet generate_ood_dataset(std::string const &kind, Index n, std::uint64_t seed, double pixel_noise)
{
  return generate_ood_dataset(parse_ood_kind(kind), n, seed, pixel_noise);
}

MaskMatrix assign_candidate_labels(std::vector<std::uint16_t> const &true_labels, Index q, double p, std::uint64_t seed)
{
  if (!(p >= 0.0 && p <= 1.0)) { throw Error("assign_candidate_labels: p must lie in [0,1]"); }
  Index const n = static_cast<Index>(true_labels.size());
  MaskMatrix  mask = MaskMatrix::Constant(n, q, false);
  for (Index i = 0; i < n; ++i) {
    Rng                                    rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Index const                            truth = true_labels[static_cast<std::size_t>(i)];
    if (truth >= q) { throw Error("assign_candidate_labels: label out of range at row " + std::to_string(i)); }
    for (Index j = 0; j < q; ++j) {
      mask(i, j) = (j == truth) || unit(rng) < p;
    }
  }
  return mask;
}

} // namespace plood::data
