// SPDX-License-Identifier: Apache-2.0
#include "plood/binio.hpp"
#include "plood/datagen.hpp"

#include <fstream>

namespace plood::data {

namespace {
constexpr std::string_view kMagic = "PLOD";
constexpr std::uint32_t    kVersion = 1;

Index bitset_bytes(Index q) { return (q + 7) / 8; }

DatasetHeader parse_header(nlohmann::json const &h)
{
  DatasetHeader out;
  try {
    out.n = h.at("N").get<Index>();
    out.classes = h.at("q").get<Index>();
    out.partial_rate = h.at("p").get<double>();
    out.origin = parse_origin(h.at("origin").get<std::string>());
    out.seed = h.at("seed").get<std::uint64_t>();
    out.shape = h.at("shape").get<Shape>();
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  } catch (Error const &e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  }
  if (out.n < 0 || out.classes < 0 || out.shape.size() != 4 || out.shape[0] != out.n) {
    throw FormatError("dataset header: inconsistent N/shape");
  }
  return out;
}
} // namespace

void save_dataset(LabeledImageSet const &set, std::filesystem::path const &path)
{
  nlohmann::json header = {{"N", set.size()},
                           {"q", set.classes},
                           {"p", set.partial_rate},
                           {"origin", origin_name(set.origin)},
                           {"seed", set.seed},
                           {"shape", set.images.shape()}};
  std::ofstream os(path, std::ios::binary);
  if (!os) { throw Error("cannot write dataset " + path.string()); }
  binio::write_header(os, kMagic, kVersion, header);
  binio::write_f64(os, {set.images.data().data(), static_cast<std::size_t>(set.images.size())});
  for (auto label : set.true_labels) {
    binio::write_u16(os, label);
  }
  Index const        nb = bitset_bytes(set.classes);
  std::vector<char> row(static_cast<std::size_t>(nb));
  for (Index i = 0; i < set.size(); ++i) {
    std::fill(row.begin(), row.end(), 0);
    for (Index j = 0; j < set.classes; ++j) {
      if (set.candidates(i, j)) { row[static_cast<std::size_t>(j / 8)] |= static_cast<char>(1 << (j % 8)); }
    }
    os.write(row.data(), nb);
  }
  if (!os) { throw Error("write failed for dataset " + path.string()); }
}

DatasetHeader inspect_dataset(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) { throw Error("cannot open dataset " + path.string()); }
  DatasetHeader h = parse_header(binio::read_header(is, kMagic, kVersion));
  h.payload_offset = static_cast<std::uint64_t>(is.tellg());
  return h;
}

LabeledImageSet load_dataset(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) { throw Error("cannot open dataset " + path.string()); }
  DatasetHeader const h = parse_header(binio::read_header(is, kMagic, kVersion));

  LabeledImageSet set;
  set.images = Tensor(h.shape);
  binio::read_f64(is, {set.images.data().data(), static_cast<std::size_t>(set.images.size())}, "images");
  set.true_labels.resize(static_cast<std::size_t>(h.n));
  for (auto &label : set.true_labels) {
    label = binio::read_u16(is, "labels");
    if (label != kNoLabel && static_cast<Index>(label) >= h.classes) { throw FormatError("label out of range"); }
  }
  Index const       nb = bitset_bytes(h.classes);
  std::vector<char> row(static_cast<std::size_t>(nb));
  set.candidates = MaskMatrix::Constant(h.n, h.classes, false);
  for (Index i = 0; i < h.n; ++i) {
    binio::read_exact(is, row.data(), static_cast<std::size_t>(nb), "candidate sets");
    for (Index j = 0; j < h.classes; ++j) {
      set.candidates(i, j) = (row[static_cast<std::size_t>(j / 8)] >> (j % 8)) & 1;
    }
  }
  binio::expect_eof(is);
  set.origin = h.origin;
  set.seed = h.seed;
  set.partial_rate = h.partial_rate;
  set.classes = h.classes;
  return set;
}

} // namespace plood::data
