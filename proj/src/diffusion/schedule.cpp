// SPDX-License-Identifier: Apache-2.0
#include "sald/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "sald/error.hpp"
#include "sald/nn/ops.hpp"
#include "sald/rng.hpp"

namespace sald::diffusion {

void NoiseSchedule::check_step(int t) const {
  if (t < 0 || t >= steps) {
    throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps) + ")");
  }
}

double NoiseSchedule::posterior_variance(int t) const {
  check_step(t);
  if (t == 0) return 0.0;
  return beta[t] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
}

double NoiseSchedule::log_snr(int t) const {
  check_step(t);
  return std::log(alpha_bar[t]) - std::log1p(-alpha_bar[t]);
}

double NoiseSchedule::time_level(int t) const {
  return (std::clamp(log_snr(t), -12.0, 12.0) + 12.0) / 24.0;
}

namespace {

NoiseSchedule from_betas(std::vector<double> beta) {
  NoiseSchedule s;
  s.steps = static_cast<int>(beta.size());
  s.beta = std::move(beta);
  double prod = 1.0;
  for (double b : s.beta) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta outside (0,1)");
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  for (int t = 1; t < s.steps; ++t) {
    if (!(s.alpha_bar[t] < s.alpha_bar[t - 1])) throw ConfigError("alpha_bar not strictly decreasing");
  }
  return s;
}

}  // namespace

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw ConfigError("schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule needs 0 < beta_start < beta_end < 1");
  }
  std::vector<double> beta(steps);
  for (int t = 0; t < steps; ++t) {
    beta[t] = beta_start + (beta_end - beta_start) * t / (steps - 1);
  }
  return from_betas(std::move(beta));
}

NoiseSchedule default_schedule(int steps) {
  if (steps < 2) throw ConfigError("schedule needs T >= 2");
  const double k = 1000.0 / steps;
  std::vector<double> beta(steps);
  for (int t = 0; t < steps; ++t) {
    beta[t] = std::min(0.999, 1e-4 * k + (0.02 * k - 1e-4 * k) * t / (steps - 1));
  }
  return from_betas(std::move(beta));
}

template <typename T>
nn::Tensor<T> forward_noise(const nn::Tensor<T>& x0, std::span<const int> t, const nn::Tensor<T>& eps,
                            const NoiseSchedule& s) {
  if (x0.shape() != eps.shape()) {
    throw DimensionError("forward_noise: eps " + nn::to_string(eps.shape()) + " vs x0 " +
                         nn::to_string(x0.shape()));
  }
  std::vector<T> a, b;
  for (int ti : t) {
    s.check_step(ti);
    a.push_back(static_cast<T>(std::sqrt(s.alpha_bar[ti])));
    b.push_back(static_cast<T>(std::sqrt(1.0 - s.alpha_bar[ti])));
  }
  return nn::add(nn::scale_per_sample(x0, std::span<const T>(a)),
                 nn::scale_per_sample(eps, std::span<const T>(b)));
}

template <typename T>
nn::Tensor<T> gaussian(const nn::Shape& shape, std::uint64_t seed, std::uint64_t stream) {
  CounterRng rng(derive_seed(seed, stream));
  std::vector<T> v(nn::numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return nn::Tensor<T>(shape, std::move(v));
}

#define SALD_INSTANTIATE_SCHEDULE(T)                                                             \
  template nn::Tensor<T> forward_noise(const nn::Tensor<T>&, std::span<const int>,             \
                                       const nn::Tensor<T>&, const NoiseSchedule&);           \
  template nn::Tensor<T> gaussian(const nn::Shape&, std::uint64_t, std::uint64_t);

SALD_INSTANTIATE_SCHEDULE(float)
SALD_INSTANTIATE_SCHEDULE(double)

}  // namespace sald::diffusion
