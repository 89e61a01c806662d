// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay (PyTorch semantics) and cosine annealing.
#pragma once

#include <string>
#include <vector>

#include "sald/nn/tensor.hpp"

namespace sald::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// lr_min + (lr_init - lr_min) (1 + cos(pi step / total)) / 2.
double cosine_lr(long step, long total_steps, double lr_init, double lr_min);

template <typename T>
class AdamW {
 public:
  struct Slot {
    std::string name;
    Tensor<T> param;  // shares storage with the model's tensor
    std::vector<T> m, v;
  };

  explicit AdamW(AdamConfig cfg = {}) : cfg_(cfg) {}

  void add(const std::string& name, const Tensor<T>& param);

  /// One update of every parameter that holds a gradient:
  ///   p -= lr wd p;  m, v <- moments;  p -= lr m_hat / (sqrt(v_hat) + eps)
  /// Parameters without a gradient are skipped, as are their moments.
  void step(double lr);
  void zero_grad();

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

}  // namespace sald::nn
