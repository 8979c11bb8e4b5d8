// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "plood/graph.hpp"
#include "plood/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace plood::net {

inline constexpr Index kImageSide = 16;
inline constexpr Index kConv1Channels = 8;
inline constexpr Index kConv2Channels = 16;
inline constexpr Index kFlatDim = kConv2Channels * (kImageSide / 4) * (kImageSide / 4);
inline constexpr Index kHeadDim = 32;
inline constexpr Index kFeatureDim = 2 * kHeadDim;

enum class Phase
{
  Ssfe, // extractor + rotation head
  Pll,  // extractor + label head; rotation head retained but frozen
};

char const *phase_name(Phase p);
Phase       parse_phase(std::string const &s);

enum class Slot : std::size_t
{
  Conv1W,
  Conv1B,
  Conv2W,
  Conv2B,
  RcW,
  RcB,
  RiW,
  RiB,
  RotW,
  RotB,
  PllW,
  PllB,
};
inline constexpr std::size_t kSlotCount = 12;
char const *slot_name(Slot s);

/// Parameter bundle. Tensors are stored in declaration order; a slot that is
/// absent for the current phase holds an empty tensor.
struct BackboneParams
{
  Phase                            phase = Phase::Ssfe;
  std::uint64_t                    seed = 0;
  Index                            rotations = 4;
  Index                            classes = 0;
  std::array<Tensor, kSlotCount>   tensors;

  Tensor       &operator[](Slot s) { return tensors[static_cast<std::size_t>(s)]; }
  Tensor const &operator[](Slot s) const { return tensors[static_cast<std::size_t>(s)]; }
  bool          has(Slot s) const { return !(*this)[s].empty(); }
  bool          all_finite() const;
};

/// Slots updated by each training phase.
std::vector<Slot> trainable_slots(Phase phase);

/// Fresh SSFE-phase parameters: He-uniform weights, zero biases.
BackboneParams init_ssfe(std::uint64_t seed, Index rotations = 4);

/// Copies extractor and heads, adds a label classifier drawn uniformly from
/// [-0.05, 0.05] with the given seed, and switches the phase tag to pll.
BackboneParams init_finetune(BackboneParams const &ssfe, Index classes, std::uint64_t seed);

struct FeaturePair
{
  RowMatrix h_rc;   // B x 32
  RowMatrix h_ri;   // B x 32
  RowMatrix h_ssfe; // B x 64, h_rc followed by h_ri
};

/// Node ids of the shared extractor inside a graph.
struct ExtractorNodes
{
  ad::NodeId images;
  std::array<ad::NodeId, 8> params; // Conv1W .. RiB
  ad::NodeId h_rc, h_ri, h_ssfe;
};

/// Appends the extractor to `g`. Each parameter leaf is declared right before
/// its first use so edits to late parameters only re-run downstream nodes.
ExtractorNodes build_extractor(ad::Graph &g);

/// Appends an affine head `features * W + b`; returns {W, b, logits}.
std::array<ad::NodeId, 3> build_affine(ad::Graph &g, ad::NodeId features, std::string const &prefix);

void bind_extractor(ad::Graph &g, ExtractorNodes const &nodes, BackboneParams const &params);

/// Images must be B x 1 x 16 x 16.
void check_images(Tensor const &images);

FeaturePair extract_features(BackboneParams const &params, Tensor const &images);
RowMatrix   rotation_logits(BackboneParams const &params, RowMatrix const &h_rc);
RowMatrix   pll_head(BackboneParams const &params, RowMatrix const &h_ssfe);
RowMatrix   pll_logits(BackboneParams const &params, Tensor const &images);

/// Processes `images` in chunks of `chunk` rows.
RowMatrix pll_logits_batched(BackboneParams const &params, Tensor const &images, Index chunk = 256);

/// Rows [begin, end) of a B x ... tensor.
Tensor slice_rows(Tensor const &t, Index begin, Index end);
/// Rows selected by index.
Tensor gather_rows(Tensor const &t, std::vector<Index> const &rows);

void           save_checkpoint(BackboneParams const &params, std::filesystem::path const &path);
BackboneParams load_checkpoint(std::filesystem::path const &path);
/// FNV-1a over every present tensor's bytes; identifies a trained model.
std::uint64_t checksum(BackboneParams const &params);

} // namespace plood::net
