// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout (all integers little-endian):
//
//   "SCKP" | u32 version = 1 | u32 meta_len | meta (JSON, UTF-8)
//   u32 count | count x { u16 name_len | name | u8 rank | rank x u32 dim }
//   count x float32[numel]            tensor data in name-table order
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sald/nn/tensor.hpp"

namespace sald::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  nn::Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const;

  template <typename T>
  void put(const std::string& name, const nn::Tensor<T>& t) {
    auto v = t.values();
    tensors.push_back({name, t.shape(), std::vector<float>(v.begin(), v.end())});
  }

  /// Copies a stored tensor into `t`, which must already have its shape.
  template <typename T>
  void get(const std::string& name, nn::Tensor<T>& t) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sald::training
