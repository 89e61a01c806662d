// SPDX-License-Identifier: Apache-2.0
//
// Planar images and binary masks shared by every pipeline stage, plus
// Netpbm (PPM/PGM) file I/O.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sald/nn/tensor.hpp"

namespace sald {

/// Channel-major image, values nominally in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // 0 or 1

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B. Single-channel input is
/// returned as is.
std::vector<double> luminance(const Image& img);

/// Clamps every value into [0, 1].
Image clamped(Image img);

void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);

/// Images side by side, separated by a 2 px white gutter.
Image hstack(const std::vector<Image>& images);

/// Stacks images of one shape into [N,C,H,W].
template <typename T>
nn::Tensor<T> to_tensor(const std::vector<const Image*>& images);

template <typename T>
nn::Tensor<T> to_tensor(const Image& img) {
  return to_tensor<T>(std::vector<const Image*>{&img});
}

/// [1,1,H,W] tensor with the mask values.
template <typename T>
nn::Tensor<T> mask_tensor(const Mask& mask);

/// Sample `n` of an [N,C,H,W] tensor.
template <typename T>
Image from_tensor(const nn::Tensor<T>& t, int n = 0);

}  // namespace sald
