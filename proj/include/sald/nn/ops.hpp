// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations over NCHW tensors. Every op records a backward
// closure when grad recording is on and an input requires grad.
#pragma once

#include <span>
#include <vector>

#include "sald/nn/tensor.hpp"

namespace sald::nn {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Cross-correlation. x: [N,Cin,H,W], weight: [Cout,Cin/groups,k,k] with k odd,
/// bias: [Cout] or undefined. Output spatial size floor((H+2p-k)/stride)+1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt = {});

/// Padding that keeps the spatial size for an odd kernel at stride 1.
constexpr int same_padding(int kernel) { return (kernel - 1) / 2; }

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of [N,C,H,W] (or [N,C]). In training mode uses
/// batch statistics and updates the running buffers in place; in eval mode
/// uses the running buffers.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormOptions opt);

enum class Activation { relu, silu, sigmoid };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return activation(x, Activation::relu);
}
template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return activation(x, Activation::silu);
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(x, Activation::sigmoid);
}

enum class Direction { down, up };

/// down: average pooling over factor x factor blocks.
/// up: bilinear interpolation, sample centres at (i + 0.5) / factor - 0.5,
/// clamped at the border.
template <typename T>
Tensor<T> resample(const Tensor<T>& x, int factor, Direction direction);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// a * s where s is a one-element (possibly learnable) tensor.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, const Tensor<T>& s);

/// a * multiplier + offset with constant scalars.
template <typename T>
Tensor<T> affine(const Tensor<T>& a, T multiplier, T offset);

/// x[n] * coeffs[n] for every sample n of the leading axis.
template <typename T>
Tensor<T> scale_per_sample(const Tensor<T>& x, std::span<const T> coeffs);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int length);

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<int>& sizes);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// x: [N,C,...], bias: [C] or [N,C]; adds bias over the trailing axes.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// x: [N,C,H,W], gate: [N,C]; per-channel multiplicative gate.
template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& gate);

/// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// x: [N,F], weight: [O,F], bias: [O] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Gradient passes where lo <= x <= hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

/// 3x3 mean filter per channel with edge-replicated borders.
template <typename T>
Tensor<T> box_filter3(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// mean((a - b)^2)
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

/// mean(|a - b|)
template <typename T>
Tensor<T> mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

/// Mean negative log-likelihood of `labels` under softmax(logits), logits [N,K].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace sald::nn
