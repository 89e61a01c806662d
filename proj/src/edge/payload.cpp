// SPDX-License-Identifier: Apache-2.0
#include "sald/edge/payload.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "sald/error.hpp"

namespace sald::edge {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_le(std::span<const std::uint8_t> b, std::size_t off, int n) {
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

class VarintReader {
 public:
  explicit VarintReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint64_t next() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (pos_ >= b_.size()) throw FormatError("truncated mask run-length data");
      const std::uint8_t byte = b_[pos_++];
      v |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
      if (!(byte & 0x80)) return v;
    }
    throw FormatError("varint too long");
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::size_t lr_count(const Payload& p) {
  return 3u * static_cast<std::size_t>(p.lr_height()) * p.lr_width();
}

void validate(const Payload& p) {
  if (p.height <= 0 || p.width <= 0 || p.height > 0xFFFF || p.width > 0xFFFF) {
    throw FormatError("payload dimensions out of range");
  }
  if (p.s < 1 || p.s > 255 || p.q < 1 || p.q > 16) throw FormatError("payload s/q out of range");
  if (p.height % p.s || p.width % p.s) throw FormatError("payload dimensions not divisible by s");
  if (p.lr.size() != lr_count(p)) throw FormatError("payload sample count mismatch");
  if (p.mask.height != p.height || p.mask.width != p.width) {
    throw FormatError("payload mask shape mismatch");
  }
}

// Runs for one row, starting with a 0-run (possibly empty).
template <typename Fn>
void row_runs(const Mask& m, int y, Fn&& emit_count_then_runs) {
  std::vector<std::uint64_t> runs;
  std::uint8_t cur = 0;
  std::uint64_t len = 0;
  for (int x = 0; x < m.width; ++x) {
    const std::uint8_t v = m.at(y, x) ? 1 : 0;
    if (v != cur) {
      runs.push_back(len);
      cur = v;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  emit_count_then_runs(runs);
}

}  // namespace

std::size_t varint_size(std::uint64_t v) {
  std::size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>((v & 0x7F) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> rle_encode(const Mask& m) {
  std::vector<std::uint8_t> out;
  for (int y = 0; y < m.height; ++y) {
    row_runs(m, y, [&](const std::vector<std::uint64_t>& runs) {
      put_varint(out, runs.size());
      for (auto r : runs) put_varint(out, r);
    });
  }
  return out;
}

std::size_t rle_size(const Mask& m) {
  std::size_t n = 0;
  for (int y = 0; y < m.height; ++y) {
    row_runs(m, y, [&](const std::vector<std::uint64_t>& runs) {
      n += varint_size(runs.size());
      for (auto r : runs) n += varint_size(r);
    });
  }
  return n;
}

Mask rle_decode(std::span<const std::uint8_t> bytes, int height, int width) {
  Mask m(height, width);
  VarintReader rd(bytes);
  for (int y = 0; y < height; ++y) {
    const std::uint64_t count = rd.next();
    if (count == 0 || count > static_cast<std::uint64_t>(width) + 1) {
      throw FormatError("bad run count in mask row " + std::to_string(y));
    }
    std::uint64_t x = 0;
    for (std::uint64_t r = 0; r < count; ++r) {
      const std::uint64_t len = rd.next();
      if (x + len > static_cast<std::uint64_t>(width)) {
        throw FormatError("mask runs overflow row " + std::to_string(y));
      }
      if (r % 2 == 1) std::fill_n(m.data.begin() + static_cast<std::ptrdiff_t>(y * width + x), len, 1);
      x += len;
    }
    if (x != static_cast<std::uint64_t>(width)) {
      throw FormatError("mask runs do not cover row " + std::to_string(y));
    }
  }
  if (!rd.done()) throw FormatError("trailing bytes after mask run-length data");
  return m;
}

std::vector<std::uint8_t> pack_bits(std::span<const std::uint16_t> samples, int bits) {
  std::vector<std::uint8_t> out((samples.size() * bits + 7) / 8, 0);
  std::size_t pos = 0;
  for (std::uint16_t v : samples) {
    for (int b = bits - 1; b >= 0; --b, ++pos) {
      if ((v >> b) & 1u) out[pos >> 3] |= static_cast<std::uint8_t>(0x80u >> (pos & 7));
    }
  }
  return out;
}

std::vector<std::uint16_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t count,
                                       int bits) {
  if (bytes.size() * 8 < count * bits) throw FormatError("truncated sample data");
  std::vector<std::uint16_t> out(count, 0);
  std::size_t pos = 0;
  for (auto& v : out) {
    for (int b = 0; b < bits; ++b, ++pos) {
      v = static_cast<std::uint16_t>((v << 1) | ((bytes[pos >> 3] >> (7 - (pos & 7))) & 1u));
    }
  }
  return out;
}

PayloadSizes payload_sizes(const Payload& p) {
  PayloadSizes s;
  s.lr_data = (lr_count(p) * static_cast<std::size_t>(p.q) + 7) / 8;
  s.mask_rle = rle_size(p.mask);
  return s;
}

double bits_per_pixel(const Payload& p) {
  return 8.0 * static_cast<double>(payload_bytes(p)) / (static_cast<double>(p.height) * p.width);
}

std::vector<std::uint8_t> serialize(const Payload& p) {
  validate(p);
  const auto mask = rle_encode(p.mask);
  const auto lr = pack_bits(p.lr, p.q);
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + lr.size() + mask.size());
  out.insert(out.end(), {'S', 'A', 'L', 'D'});
  out.push_back(p.version);
  put_u16(out, static_cast<std::uint32_t>(p.height));
  put_u16(out, static_cast<std::uint32_t>(p.width));
  out.push_back(static_cast<std::uint8_t>(p.s));
  out.push_back(static_cast<std::uint8_t>(p.q));
  out.push_back(static_cast<std::uint8_t>(p.mask_mode));
  put_u32(out, static_cast<std::uint32_t>(mask.size()));
  out.insert(out.end(), lr.begin(), lr.end());
  out.insert(out.end(), mask.begin(), mask.end());
  return out;
}

Payload deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("payload shorter than its header");
  if (std::memcmp(bytes.data(), "SALD", 4) != 0) throw FormatError("bad payload magic");
  Payload p;
  p.version = bytes[4];
  if (p.version != kFormatVersion) {
    throw FormatError("unsupported payload version " + std::to_string(p.version));
  }
  p.height = static_cast<int>(get_le(bytes, 5, 2));
  p.width = static_cast<int>(get_le(bytes, 7, 2));
  p.s = bytes[9];
  p.q = bytes[10];
  if (bytes[11] > 2) throw FormatError("bad mask mode");
  p.mask_mode = static_cast<MaskMode>(bytes[11]);
  const std::size_t mask_len = get_le(bytes, 12, 4);
  if (p.height == 0 || p.width == 0 || p.s == 0 || p.q == 0 || p.q > 16 || p.height % p.s ||
      p.width % p.s) {
    throw FormatError("bad payload geometry");
  }
  const std::size_t n = lr_count(p);
  const std::size_t lr_len = (n * p.q + 7) / 8;
  if (bytes.size() != kHeaderBytes + lr_len + mask_len) {
    throw FormatError("payload length " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(kHeaderBytes + lr_len + mask_len) + ")");
  }
  p.lr = unpack_bits(bytes.subspan(kHeaderBytes, lr_len), n, p.q);
  p.mask = rle_decode(bytes.subspan(kHeaderBytes + lr_len, mask_len), p.height, p.width);
  return p;
}

void save_payload(const std::filesystem::path& path, const Payload& p) {
  const auto bytes = serialize(p);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Payload load_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read payload " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace sald::edge
