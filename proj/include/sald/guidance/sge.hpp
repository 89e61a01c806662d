// SPDX-License-Identifier: Apache-2.0
//
// Semantic-guidance engine: a cascade of conv3x3 -> BN -> ReLU -> avgpool/2
// blocks over the binary mask, with one 1x1 alignment conv per denoiser
// resolution.
#pragma once

#include <vector>

#include "sald/nn/layers.hpp"

namespace sald::guidance {

struct SGEConfig {
  /// Output channels of each cascade block; its length is K.
  std::vector<int> block_channels{8, 16, 32};
  /// For every denoiser resolution: its downsampling factor relative to the
  /// mask (a power of two) and its channel count.
  std::vector<int> target_factors{1, 2, 4};
  std::vector<int> target_channels{16, 32, 64};
};

/// Pyramid level feeding a target at `factor`: min(K, log2(factor) + 1).
int sge_level_for(int factor, int blocks);

template <typename T>
struct SGE {
  SGEConfig cfg;
  std::vector<nn::Conv2d<T>> convs;
  std::vector<nn::BatchNorm2d<T>> bns;
  std::vector<nn::Conv2d<T>> align;

  SGE() = default;
  SGE(const SGEConfig& cfg, CounterRng& rng);

  /// F^1..F^K, each half the resolution of the previous (mask is [N,1,H,W]).
  std::vector<nn::Tensor<T>> pyramid(const nn::Tensor<T>& mask);

  /// One F_stru per target resolution, aligned in size and channels.
  std::vector<nn::Tensor<T>> forward(const nn::Tensor<T>& mask);

  void set_training(bool on);
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn);

  int blocks() const { return static_cast<int>(convs.size()); }
};

}  // namespace sald::guidance
