// SPDX-License-Identifier: Apache-2.0
//
// Parameter-holding building blocks. Each exposes visit(prefix, fn) which
// enumerates (name, tensor, trainable) for checkpointing and optimization.
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "sald/nn/ops.hpp"
#include "sald/rng.hpp"

namespace sald::nn {

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& t, bool trainable)>;

template <typename T>
Tensor<T> uniform_param(Shape shape, double bound, CounterRng& rng) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when constructed without bias
  Conv2dOptions opt;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, CounterRng& rng, Conv2dOptions o = {}, bool with_bias = true)
      : opt(o) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin / o.groups * k * k));
    weight = uniform_param<T>({cout, cin / o.groups, k, k}, bound, rng);
    if (with_bias) bias = uniform_param<T>({cout}, bound, rng);
  }

  /// Same-size convolution at stride 1.
  static Conv2d same(int cin, int cout, int k, CounterRng& rng, int groups = 1,
                     bool with_bias = true) {
    return Conv2d(cin, cout, k, rng, {1, same_padding(k), groups}, with_bias);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, opt); }

  int kernel() const { return weight.dim(2); }
  int out_channels() const { return weight.dim(0); }

  void zero() {
    for (auto& v : weight.data()) v = T(0);
    if (bias.defined())
      for (auto& v : bias.data()) v = T(0);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".weight", weight, true);
    if (bias.defined()) fn(prefix + ".bias", bias, true);
  }
};

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool training = true;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels)
      : gamma({channels}, T(1), true),
        beta({channels}, T(0), true),
        running_mean({channels}, T(0)),
        running_var({channels}, T(1)) {}

  Tensor<T> operator()(const Tensor<T>& x) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, {training, momentum, eps});
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".gamma", gamma, true);
    fn(prefix + ".beta", beta, true);
    fn(prefix + ".running_mean", running_mean, false);
    fn(prefix + ".running_var", running_var, false);
  }
};

template <typename T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(int in, int out, CounterRng& rng, bool with_bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = uniform_param<T>({out, in}, bound, rng);
    if (with_bias) bias = uniform_param<T>({out}, bound, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".weight", weight, true);
    if (bias.defined()) fn(prefix + ".bias", bias, true);
  }
};

template <typename T>
std::size_t count_parameters(const std::function<void(const ParamVisitor<T>&)>& visit_all,
                             bool trainable_only = true) {
  std::size_t n = 0;
  visit_all([&](const std::string&, Tensor<T>& t, bool trainable) {
    if (trainable || !trainable_only) n += t.numel();
  });
  return n;
}

}  // namespace sald::nn
