// SPDX-License-Identifier: Apache-2.0
#include "sald/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include "sald/error.hpp"

namespace sald::nn {

double cosine_lr(long step, long total_steps, double lr_init, double lr_min) {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return lr_min;
  const double c = std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps));
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + c);
}

template <typename T>
void AdamW<T>::add(const std::string& name, const Tensor<T>& param) {
  slots_.push_back({name, param, std::vector<T>(param.numel(), T(0)), std::vector<T>(param.numel(), T(0))});
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    auto p = s.param.data();
    const auto g = s.param.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      double pi = static_cast<double>(p[i]);
      pi -= lr * cfg_.weight_decay * pi;
      const double gi = static_cast<double>(g[i]);
      const double m = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
      const double v = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      s.m[i] = static_cast<T>(m);
      s.v[i] = static_cast<T>(v);
      pi -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      p[i] = static_cast<T>(pi);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace sald::nn
