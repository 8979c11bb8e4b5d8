// SPDX-License-Identifier: Apache-2.0
#include "plood/backbone.hpp"
#include "plood/binio.hpp"

#include <fstream>

namespace plood::net {

namespace {
constexpr std::string_view kMagic = "PLCK";
constexpr std::uint32_t    kVersion = 1;
} // namespace

void save_checkpoint(BackboneParams const &params, std::filesystem::path const &path)
{
  nlohmann::json header;
  header["architecture"] = {{"image_side", kImageSide},
                            {"conv_channels", {1, kConv1Channels, kConv2Channels}},
                            {"kernel", 3},
                            {"head_dim", kHeadDim},
                            {"rotations", params.rotations},
                            {"classes", params.classes}};
  header["phase"] = phase_name(params.phase);
  header["seed"] = params.seed;
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t k = 0; k < kSlotCount; ++k) {
    auto const &t = params.tensors[k];
    if (t.empty()) { continue; }
    tensors.push_back({{"name", slot_name(static_cast<Slot>(k))}, {"shape", t.shape()}});
  }
  header["tensors"] = tensors;

  std::ofstream os(path, std::ios::binary);
  if (!os) { throw Error("cannot write checkpoint " + path.string()); }
  binio::write_header(os, kMagic, kVersion, header);
  for (auto const &t : params.tensors) {
    binio::write_f64(os, {t.data().data(), static_cast<std::size_t>(t.size())});
  }
  if (!os) { throw Error("write failed for checkpoint " + path.string()); }
}

BackboneParams load_checkpoint(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) { throw Error("cannot open checkpoint " + path.string()); }
  auto const     header = binio::read_header(is, kMagic, kVersion);
  BackboneParams p;
  try {
    p.phase = parse_phase(header.at("phase").get<std::string>());
    p.seed = header.at("seed").get<std::uint64_t>();
    p.rotations = header.at("architecture").at("rotations").get<Index>();
    p.classes = header.at("architecture").at("classes").get<Index>();
    for (auto const &entry : header.at("tensors")) {
      auto const name = entry.at("name").get<std::string>();
      std::size_t k = 0;
      while (k < kSlotCount && name != slot_name(static_cast<Slot>(k))) {
        ++k;
      }
      if (k == kSlotCount) { throw FormatError("unknown tensor '" + name + "'"); }
      p.tensors[k] = Tensor(entry.at("shape").get<Shape>());
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  for (auto &t : p.tensors) {
    binio::read_f64(is, {t.data().data(), static_cast<std::size_t>(t.size())}, "tensor data");
  }
  binio::expect_eof(is);
  return p;
}

std::uint64_t checksum(BackboneParams const &params)
{
  std::uint64_t h = binio::fnv1a({reinterpret_cast<unsigned char const *>(phase_name(params.phase)), 3});
  for (auto const &t : params.tensors) {
    h = binio::fnv1a({reinterpret_cast<unsigned char const *>(t.data().data()),
                      static_cast<std::size_t>(t.size()) * sizeof(double)},
                     h);
  }
  return h;
}

} // namespace plood::net
