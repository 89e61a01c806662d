// SPDX-License-Identifier: Apache-2.0
//
// Wire format of the edge-to-cloud transmission unit (.sald files).
//
// Layout, little-endian:
//   0  char[4] "SALD"
//   4  u8      format version (1)
//   5  u16     H            (full-resolution height)
//   7  u16     W
//   9  u8      s            (downsampling factor)
//  10  u8      q            (bits per sample)
//  11  u8      mask_mode    (0 oracle, 1 saliency, 2 none)
//  12  u32     mask_byte_len
//  16  lr_data: 3 * (H/s) * (W/s) samples of q bits, channel-major,
//      packed MSB-first, zero-padded to a whole byte
//      mask_rle: per row, varint run count, then that many varint run
//      lengths alternating 0-runs and 1-runs, starting with a 0-run
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sald/image.hpp"

namespace sald::edge {

inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;

enum class MaskMode : std::uint8_t { oracle = 0, saliency = 1, none = 2 };

struct Payload {
  std::uint8_t version = kFormatVersion;
  int height = 0;  // full-resolution H
  int width = 0;
  int s = 4;
  int q = 5;
  MaskMode mask_mode = MaskMode::oracle;
  std::vector<std::uint16_t> lr;  // quantization levels, channel-major
  Mask mask;                      // height x width

  int lr_height() const { return height / s; }
  int lr_width() const { return width / s; }
  friend bool operator==(const Payload&, const Payload&) = default;
};

struct PayloadSizes {
  std::size_t header = kHeaderBytes;
  std::size_t lr_data = 0;
  std::size_t mask_rle = 0;
  std::size_t total() const { return header + lr_data + mask_rle; }
};

/// R(payload): exact serialized byte counts, computed without serializing.
PayloadSizes payload_sizes(const Payload& p);
inline std::size_t payload_bytes(const Payload& p) { return payload_sizes(p).total(); }

/// Bits per full-resolution pixel: 8 R / (H W).
double bits_per_pixel(const Payload& p);

std::vector<std::uint8_t> serialize(const Payload& p);
/// Throws FormatError on bad magic, version, geometry or truncated data.
Payload deserialize(std::span<const std::uint8_t> bytes);

void save_payload(const std::filesystem::path& path, const Payload& p);
Payload load_payload(const std::filesystem::path& path);

std::vector<std::uint8_t> rle_encode(const Mask& m);
std::size_t rle_size(const Mask& m);
Mask rle_decode(std::span<const std::uint8_t> bytes, int height, int width);

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v);
std::size_t varint_size(std::uint64_t v);

/// Packs `bits`-wide samples MSB-first.
std::vector<std::uint8_t> pack_bits(std::span<const std::uint16_t> samples, int bits);
std::vector<std::uint16_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t count,
                                       int bits);

}  // namespace sald::edge
