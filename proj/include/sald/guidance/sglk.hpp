// SPDX-License-Identifier: Apache-2.0
//
// Structure-gated large-kernel block:
//   X_detail = SiLU(BN(conv1x1(X)))
//   X_large  = SiLU(BN(depthwise kxk(X)))
//   X_gated  = X_large * sigmoid(P(F_stru))      P: 1x1 conv
//   X_res    = BN(conv1x1(X))
//   out      = X_detail + gamma * X_gated + X_res
#pragma once

#include "sald/nn/layers.hpp"

namespace sald::guidance {

struct SGLKConfig {
  int channels = 16;
  int kernel = 9;
  double gamma_init = 1e-2;
};

template <typename T>
struct SGLKTrace {
  nn::Tensor<T> detail, large, gate, gated, res, out;
};

template <typename T>
struct SGLK {
  SGLKConfig cfg;
  nn::Conv2d<T> detail_conv;
  nn::BatchNorm2d<T> detail_bn;
  nn::Conv2d<T> context_conv;  // depthwise
  nn::BatchNorm2d<T> context_bn;
  nn::Conv2d<T> gate_proj;  // P, zero-initialized bias
  nn::Conv2d<T> res_conv;
  nn::BatchNorm2d<T> res_bn;
  nn::Tensor<T> gamma;

  SGLK() = default;
  SGLK(const SGLKConfig& cfg, CounterRng& rng);

  /// An undefined `f_stru` selects the mask-free path: a constant 0.5 gate,
  /// which equals P(0) with zero bias.
  nn::Tensor<T> forward(const nn::Tensor<T>& x, const nn::Tensor<T>& f_stru,
                        SGLKTrace<T>* trace = nullptr);

  void set_training(bool on);
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn);
};

}  // namespace sald::guidance
