// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian container primitives shared by the dataset, checkpoint and
// confidence-matrix files. Layout: 4-byte magic, u32 version, u32 header
// length, JSON header, then raw payload.

#include "plood/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace plood::binio {

inline void write_u16(std::ostream &os, std::uint16_t v)
{
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline void write_u32(std::ostream &os, std::uint32_t v)
{
  char b[4];
  for (int i = 0; i < 4; ++i) {
    b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  os.write(b, 4);
}

inline void write_f64(std::ostream &os, std::span<double const> values)
{
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<char const *>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double d : values) {
      auto const u = std::bit_cast<std::uint64_t>(d);
      char       b[8];
      for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
      }
      os.write(b, 8);
    }
  }
}

inline void read_exact(std::istream &is, char *dst, std::size_t n, std::string_view what)
{
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) { throw FormatError("truncated file while reading " + std::string(what)); }
}

inline std::uint16_t read_u16(std::istream &is, std::string_view what)
{
  unsigned char b[2];
  read_exact(is, reinterpret_cast<char *>(b), 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream &is, std::string_view what)
{
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char *>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void read_f64(std::istream &is, std::span<double> out, std::string_view what)
{
  read_exact(is, reinterpret_cast<char *>(out.data()), out.size_bytes(), what);
  if constexpr (std::endian::native != std::endian::little) {
    for (double &d : out) {
      auto          u = std::bit_cast<std::uint64_t>(d);
      std::uint64_t r = 0;
      for (int i = 0; i < 8; ++i) {
        r = (r << 8) | ((u >> (8 * i)) & 0xff);
      }
      d = std::bit_cast<double>(r);
    }
  }
}

inline void write_header(std::ostream &os, std::string_view magic, std::uint32_t version, nlohmann::json const &header)
{
  os.write(magic.data(), 4);
  write_u32(os, version);
  std::string const text = header.dump();
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::istream &is, std::string_view magic, std::uint32_t version)
{
  char m[4];
  read_exact(is, m, 4, "magic");
  if (std::string_view(m, 4) != magic) { throw FormatError("bad magic, expected '" + std::string(magic) + "'"); }
  std::uint32_t const v = read_u32(is, "version");
  if (v != version) { throw FormatError("unsupported version " + std::to_string(v)); }
  std::uint32_t const len = read_u32(is, "header length");
  std::string         text(len, '\0');
  read_exact(is, text.data(), len, "header");
  try {
    return nlohmann::json::parse(text);
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
}

/// Fails unless the stream is exhausted.
inline void expect_eof(std::istream &is)
{
  if (is.peek() != std::char_traits<char>::eof()) { throw FormatError("trailing bytes after payload"); }
}

inline std::uint64_t fnv1a(std::span<unsigned char const> bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
{
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace plood::binio
