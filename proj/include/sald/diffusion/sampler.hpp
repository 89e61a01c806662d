// SPDX-License-Identifier: Apache-2.0
//
// Epsilon-prediction loss, the ancestral reverse step and end-to-end sampling
// from transmitted payloads.
#pragma once

#include <functional>
#include <vector>

#include "sald/diffusion/denoiser.hpp"
#include "sald/diffusion/schedule.hpp"
#include "sald/edge/payload.hpp"
#include "sald/image.hpp"

namespace sald::diffusion {

template <typename T>
using EpsPredictor =
    std::function<nn::Tensor<T>(const nn::Tensor<T>& x_t, std::span<const int> t, const Condition<T>& c)>;

/// Wraps a denoiser, translating timesteps into time levels under `s`.
template <typename T>
EpsPredictor<T> predictor(Denoiser<T>& den, const NoiseSchedule& s);

template <typename T>
struct DiffusionDraw {
  std::vector<int> t;
  nn::Tensor<T> eps, x_t, eps_hat, loss;
};

/// Draws t ~ U[0,T) per sample and eps ~ N(0,I) from `seed`, noises x0 and
/// scores the prediction with mean squared error.
template <typename T>
DiffusionDraw<T> diffusion_draw(const nn::Tensor<T>& x0, const Condition<T>& cond,
                                const EpsPredictor<T>& eps_fn, const NoiseSchedule& s, std::uint64_t seed);

template <typename T>
nn::Tensor<T> diffusion_loss(const nn::Tensor<T>& x0, const Condition<T>& cond,
                             const EpsPredictor<T>& eps_fn, const NoiseSchedule& s, std::uint64_t seed) {
  return diffusion_draw(x0, cond, eps_fn, s, seed).loss;
}

/// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sqrt(beta~_t) noise.
/// `noise` may be undefined (treated as zero); it is ignored at t = 0.
/// With `clip_x0` the same mean is formed from the x0 estimate clamped to
/// [-1,1]:  mean = c0 clamp(x0_hat) + c1 x_t. Without clamping both agree.
template <typename T>
nn::Tensor<T> denoise_step(const nn::Tensor<T>& x_t, int t, const Condition<T>& cond,
                           const EpsPredictor<T>& eps_fn, const NoiseSchedule& s, const nn::Tensor<T>& noise,
                           bool clip_x0 = false);

/// Dequantized LR planes of equally sized payloads, [N,3,h,w] in [0,1].
template <typename T>
nn::Tensor<T> lr_batch(const std::vector<const edge::Payload*>& payloads);

/// Payload masks as [N,1,H,W].
template <typename T>
nn::Tensor<T> mask_batch(const std::vector<const edge::Payload*>& payloads);

struct SampleOptions {
  /// Feed payload masks to SGE. Off, or for mask_mode none, the mask-free path is used.
  bool use_mask = true;
  /// Clamp the per-step x0 estimate to the data range (pixel-space codec only).
  bool clip_x0 = true;
};

/// Reverse diffusion from seeded Gaussian noise for each payload, decoded,
/// post-processed and clamped to [0,1]. `seeds[i]` fixes image i's noise, so
/// results do not depend on batch composition. Puts the model in eval mode.
template <typename T>
std::vector<Image> sample(SaldModel<T>& model, const std::vector<const edge::Payload*>& payloads,
                          std::span<const std::uint64_t> seeds, const NoiseSchedule& s,
                          const SampleOptions& opts = {});

template <typename T>
Image sample(SaldModel<T>& model, const edge::Payload& payload, const NoiseSchedule& s, std::uint64_t seed,
             const SampleOptions& opts = {}) {
  const std::uint64_t seeds[1] = {seed};
  return sample(model, {&payload}, seeds, s, opts).front();
}

}  // namespace sald::diffusion
