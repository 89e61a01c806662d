// SPDX-License-Identifier: Apache-2.0
//
// Linear beta schedule and the closed-form forward (noising) process.
#pragma once

#include <span>
#include <vector>

#include "sald/nn/tensor.hpp"

namespace sald::diffusion {

struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta, alpha, alpha_bar;

  /// beta~_t = beta_t (1 - abar_{t-1}) / (1 - abar_t), zero at t = 0.
  double posterior_variance(int t) const;
  /// log(abar_t / (1 - abar_t)).
  double log_snr(int t) const;
  /// Log-SNR mapped from [-12, 12] onto [0, 1]; the denoiser's time input.
  double time_level(int t) const;
  void check_step(int t) const;
};

/// Linear interpolation of beta from `beta_start` to `beta_end` over T steps.
NoiseSchedule build_schedule(int steps, double beta_start, double beta_end);

/// The 1000-step (1e-4, 0.02) schedule compressed to T steps, betas capped at 0.999.
NoiseSchedule default_schedule(int steps);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, with one t per batch entry.
template <typename T>
nn::Tensor<T> forward_noise(const nn::Tensor<T>& x0, std::span<const int> t, const nn::Tensor<T>& eps,
                            const NoiseSchedule& s);

template <typename T>
nn::Tensor<T> forward_noise(const nn::Tensor<T>& x0, int t, const nn::Tensor<T>& eps,
                            const NoiseSchedule& s) {
  std::vector<int> ts(x0.ndim() > 0 ? x0.dim(0) : 1, t);
  return forward_noise(x0, std::span<const int>(ts), eps, s);
}

/// Standard-normal tensor drawn from (seed, stream).
template <typename T>
nn::Tensor<T> gaussian(const nn::Shape& shape, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace sald::diffusion
