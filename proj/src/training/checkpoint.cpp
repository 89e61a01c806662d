// SPDX-License-Identifier: Apache-2.0
#include "sald/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sald/error.hpp"

namespace sald::training {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

const StoredTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

template <typename T>
void Checkpoint::get(const std::string& name, nn::Tensor<T>& t) const {
  const auto* s = find(name);
  if (!s) throw FormatError("checkpoint lacks tensor '" + name + "'");
  if (s->shape != t.shape()) {
    throw DimensionError("checkpoint tensor '" + name + "' has shape " + nn::to_string(s->shape) +
                         ", model expects " + nn::to_string(t.shape()));
  }
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(s->data[i]);
}

template void Checkpoint::get(const std::string&, nn::Tensor<float>&) const;
template void Checkpoint::get(const std::string&, nn::Tensor<double>&) const;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  std::vector<std::uint8_t> out{'S', 'C', 'K', 'P'};
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = c.meta.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long");
    if (t.data.size() != nn::numel(t.shape)) throw FormatError("tensor '" + t.name + "' size mismatch");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.shape.size()));
    for (int d : t.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& t : c.tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size() * sizeof(float));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), "SCKP", 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto meta = r.take(r.le<std::uint32_t>());
  try {
    c.meta = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name = r.take(r.le<std::uint16_t>());
    t.name.assign(name.begin(), name.end());
    const auto rank = r.le<std::uint8_t>();
    for (int d = 0; d < rank; ++d) t.shape.push_back(static_cast<int>(r.le<std::uint32_t>()));
    c.tensors.push_back(std::move(t));
  }
  for (auto& t : c.tensors) {
    const auto raw = r.take(nn::numel(t.shape) * sizeof(float));
    t.data.resize(nn::numel(t.shape));
    std::memcpy(t.data.data(), raw.data(), raw.size());
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint data");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize_checkpoint(c);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace sald::training
