// SPDX-License-Identifier: Apache-2.0
#include "sald/guidance/sglk.hpp"

#include "sald/error.hpp"

namespace sald::guidance {

template <typename T>
SGLK<T>::SGLK(const SGLKConfig& c, CounterRng& rng) : cfg(c) {
  if (cfg.kernel < 1 || cfg.kernel % 2 == 0) throw ConfigError("SGLK kernel must be odd");
  if (cfg.channels < 1) throw ConfigError("SGLK channels must be positive");
  const int ch = cfg.channels;
  detail_conv = nn::Conv2d<T>::same(ch, ch, 1, rng, 1, false);
  detail_bn = nn::BatchNorm2d<T>(ch);
  context_conv = nn::Conv2d<T>::same(ch, ch, cfg.kernel, rng, ch, false);
  context_bn = nn::BatchNorm2d<T>(ch);
  gate_proj = nn::Conv2d<T>::same(ch, ch, 1, rng);
  for (auto& v : gate_proj.bias.data()) v = T(0);
  res_conv = nn::Conv2d<T>::same(ch, ch, 1, rng, 1, false);
  res_bn = nn::BatchNorm2d<T>(ch);
  gamma = nn::Tensor<T>({1}, static_cast<T>(cfg.gamma_init), true);
}

template <typename T>
nn::Tensor<T> SGLK<T>::forward(const nn::Tensor<T>& x, const nn::Tensor<T>& f_stru,
                               SGLKTrace<T>* trace) {
  if (x.ndim() != 4 || x.dim(1) != cfg.channels) {
    throw DimensionError("SGLK expects " + std::to_string(cfg.channels) + " channels, got " +
                         nn::to_string(x.shape()));
  }
  if (f_stru.defined() && f_stru.shape() != x.shape()) {
    throw DimensionError("SGLK structure features " + nn::to_string(f_stru.shape()) +
                         " misaligned with input " + nn::to_string(x.shape()));
  }
  auto detail = nn::silu(detail_bn(detail_conv(x)));
  auto large = nn::silu(context_bn(context_conv(x)));
  nn::Tensor<T> gate;
  nn::Tensor<T> gated;
  if (f_stru.defined()) {
    gate = nn::sigmoid(gate_proj(f_stru));
    gated = nn::mul(large, gate);
  } else {
    gate = nn::Tensor<T>(x.shape(), T(0.5));
    gated = nn::affine(large, T(0.5), T(0));
  }
  auto res = res_bn(res_conv(x));
  auto out = nn::add(nn::add(detail, nn::scale(gated, gamma)), res);
  if (trace) *trace = {detail, large, gate, gated, res, out};
  return out;
}

template <typename T>
void SGLK<T>::set_training(bool on) {
  detail_bn.training = context_bn.training = res_bn.training = on;
}

template <typename T>
void SGLK<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
  detail_conv.visit(prefix + ".detail.conv", fn);
  detail_bn.visit(prefix + ".detail.bn", fn);
  context_conv.visit(prefix + ".context.conv", fn);
  context_bn.visit(prefix + ".context.bn", fn);
  gate_proj.visit(prefix + ".gate", fn);
  res_conv.visit(prefix + ".res.conv", fn);
  res_bn.visit(prefix + ".res.bn", fn);
  fn(prefix + ".gamma", gamma, true);
}

template struct SGLK<float>;
template struct SGLK<double>;

}  // namespace sald::guidance
