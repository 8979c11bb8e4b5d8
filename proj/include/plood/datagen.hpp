// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic OOD partial-label benchmark: class glyphs for in-distribution
// data, texture families for OOD data, exact grid rotations and candidate-set
// corruption under a partial rate.
//
// The rotation pretext treats each original image as a positive example and
// its rotated copies as negatives; the trainer realises this as R-way rotation
// classification in which non-identity rotations are down-weighted.

#include "plood/error.hpp"
#include "plood/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace plood::data {

inline constexpr std::uint16_t kNoLabel = 0xFFFF;
// Gaussian pixel noise of the shipped benchmark.
inline constexpr double        kDefaultPixelNoise = 0.6;
inline constexpr Index         kRotations = 4;

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Origin
{
  IdTrain,
  IdTest,
  Ood,
};
char const *origin_name(Origin o);
Origin      parse_origin(std::string const &s);

enum class GlyphFamily
{
  Bar,
  Corner,
  Cross,
  Ring,
  Tee,
  Wedge,
};

enum class OodKind
{
  Checkerboard,
  Blob,
  UniformNoise,
  StripesOffgrid,
};
char const *ood_kind_name(OodKind k);
OodKind     parse_ood_kind(std::string const &s);
std::vector<OodKind> all_ood_kinds();

struct GlyphClass
{
  GlyphFamily family = GlyphFamily::Bar;
  double      angle_deg = 0.0;
};

struct GlyphSpec
{
  std::vector<GlyphClass> classes;
  double                  pixel_noise = kDefaultPixelNoise;

  Index num_classes() const { return static_cast<Index>(classes.size()); }

  /// Cycles through the six families; repeats are tilted by 15 degree steps.
  static GlyphSpec standard(Index q, double pixel_noise = kDefaultPixelNoise);
};

struct LabeledImageSet
{
  Tensor                     images; // N x 1 x 16 x 16
  std::vector<std::uint16_t> true_labels;
  MaskMatrix                 candidates; // N x q
  Origin                     origin = Origin::IdTrain;
  std::uint64_t              seed = 0;
  double                     partial_rate = 0.0;
  Index                      classes = 0;

  Index size() const { return static_cast<Index>(true_labels.size()); }
  Image image(Index i) const;
};

/// Noise-free 16x16 template of one glyph class.
Image render_glyph(GlyphClass const &glyph);

LabeledImageSet generate_id_dataset(GlyphSpec const &spec, Index n, std::uint64_t seed,
                                    Origin origin = Origin::IdTrain, double partial_rate = 0.0);

LabeledImageSet generate_ood_dataset(OodKind kind, Index n, std::uint64_t seed, double pixel_noise = kDefaultPixelNoise);
LabeledImageSet generate_ood_dataset(std::string const &kind, Index n, std::uint64_t seed, double pixel_noise = kDefaultPixelNoise);

/// Lossless rotation by 90 * (r - 1) degrees counterclockwise; r in 1..4.
template <typename Derived>
Image rotate(Eigen::MatrixBase<Derived> const &img, Index r)
{
  if (img.rows() != img.cols()) { throw Error("rotate: image is not square"); }
  switch (r) {
  case 1: return img;
  case 2: return img.transpose().colwise().reverse();
  case 3: return img.reverse();
  case 4: return img.transpose().rowwise().reverse();
  default: throw Error("rotate: rotation index " + std::to_string(r) + " outside 1..4");
  }
}

/// {true label} plus each other label independently with probability p.
MaskMatrix assign_candidate_labels(std::vector<std::uint16_t> const &true_labels, Index q, double p, std::uint64_t seed);

struct DatasetHeader
{
  Index         n = 0;
  Index         classes = 0;
  double        partial_rate = 0.0;
  Origin        origin = Origin::IdTrain;
  std::uint64_t seed = 0;
  Shape         shape;
  std::uint64_t payload_offset = 0;
};

void            save_dataset(LabeledImageSet const &set, std::filesystem::path const &path);
LabeledImageSet load_dataset(std::filesystem::path const &path);
/// Reads the header only.
DatasetHeader inspect_dataset(std::filesystem::path const &path);

} // namespace plood::data
