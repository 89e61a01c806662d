// SPDX-License-Identifier: Apache-2.0
#include "sald/diffusion/sampler.hpp"

#include <cmath>

#include "sald/edge/encoder.hpp"
#include "sald/error.hpp"
#include "sald/rng.hpp"

namespace sald::diffusion {

template <typename T>
EpsPredictor<T> predictor(Denoiser<T>& den, const NoiseSchedule& s) {
  return [&den, &s](const nn::Tensor<T>& x_t, std::span<const int> t, const Condition<T>& c) {
    std::vector<double> levels;
    for (int ti : t) levels.push_back(s.time_level(ti));
    return den.forward(x_t, levels, c);
  };
}

template <typename T>
DiffusionDraw<T> diffusion_draw(const nn::Tensor<T>& x0, const Condition<T>& cond,
                                const EpsPredictor<T>& eps_fn, const NoiseSchedule& s, std::uint64_t seed) {
  DiffusionDraw<T> d;
  CounterRng rng(derive_seed(seed, hash_tag("timesteps")));
  for (int i = 0; i < x0.dim(0); ++i) d.t.push_back(static_cast<int>(rng.below(s.steps)));
  d.eps = gaussian<T>(x0.shape(), seed, hash_tag("eps"));
  d.x_t = forward_noise(x0, std::span<const int>(d.t), d.eps, s);
  d.eps_hat = eps_fn(d.x_t, d.t, cond);
  d.loss = nn::mse(d.eps_hat, d.eps);
  return d;
}

template <typename T>
nn::Tensor<T> denoise_step(const nn::Tensor<T>& x_t, int t, const Condition<T>& cond,
                           const EpsPredictor<T>& eps_fn, const NoiseSchedule& s, const nn::Tensor<T>& noise,
                           bool clip_x0) {
  s.check_step(t);
  const std::vector<int> ts(x_t.dim(0), t);
  const auto eps_hat = eps_fn(x_t, ts, cond);
  if (eps_hat.shape() != x_t.shape()) throw DimensionError("predictor output shape differs from x_t");
  nn::Tensor<T> mean;
  if (clip_x0) {
    const double ab = s.alpha_bar[t], ab_prev = t > 0 ? s.alpha_bar[t - 1] : 1.0;
    const auto x0 = nn::clamp(nn::add(nn::affine(x_t, static_cast<T>(1.0 / std::sqrt(ab)), T(0)),
                                      nn::affine(eps_hat, static_cast<T>(-std::sqrt(1.0 / ab - 1.0)), T(0))),
                              T(-1), T(1));
    const double c0 = std::sqrt(ab_prev) * s.beta[t] / (1.0 - ab);
    const double c1 = std::sqrt(s.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab);
    mean = nn::add(nn::affine(x0, static_cast<T>(c0), T(0)), nn::affine(x_t, static_cast<T>(c1), T(0)));
  } else {
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[t]);
    const double coef = -s.beta[t] / std::sqrt(1.0 - s.alpha_bar[t]) * inv_sqrt_alpha;
    mean = nn::add(nn::affine(x_t, static_cast<T>(inv_sqrt_alpha), T(0)),
                   nn::affine(eps_hat, static_cast<T>(coef), T(0)));
  }
  if (t == 0 || !noise.defined()) return mean;
  if (noise.shape() != x_t.shape()) throw DimensionError("noise shape differs from x_t");
  const double sigma = std::sqrt(s.posterior_variance(t));
  return nn::add(mean, nn::affine(noise, static_cast<T>(sigma), T(0)));
}

template <typename T>
nn::Tensor<T> lr_batch(const std::vector<const edge::Payload*>& payloads) {
  std::vector<Image> imgs;
  for (const auto* p : payloads) imgs.push_back(edge::dequantize_lr(*p));
  std::vector<const Image*> ptrs;
  for (const auto& im : imgs) ptrs.push_back(&im);
  return to_tensor<T>(ptrs);
}

template <typename T>
nn::Tensor<T> mask_batch(const std::vector<const edge::Payload*>& payloads) {
  if (payloads.empty()) throw DimensionError("empty payload batch");
  const int h = payloads.front()->height, w = payloads.front()->width;
  std::vector<T> v;
  v.reserve(payloads.size() * h * w);
  for (const auto* p : payloads) {
    if (p->mask.height != h || p->mask.width != w) throw DimensionError("payload masks differ in size");
    for (auto m : p->mask.data) v.push_back(static_cast<T>(m));
  }
  return nn::Tensor<T>({static_cast<int>(payloads.size()), 1, h, w}, std::move(v));
}

template <typename T>
std::vector<Image> sample(SaldModel<T>& model, const std::vector<const edge::Payload*>& payloads,
                          std::span<const std::uint64_t> seeds, const NoiseSchedule& s,
                          const SampleOptions& opts) {
  if (payloads.empty()) return {};
  if (seeds.size() != payloads.size()) throw ConfigError("one seed per payload");
  const auto& first = *payloads.front();
  for (const auto* p : payloads) {
    if (p->height != first.height || p->width != first.width || p->s != first.s) {
      throw DimensionError("payload batch must share geometry");
    }
  }
  const int stride = model.codec.stride();
  if (first.height % stride || first.width % stride) throw DimensionError("image size not divisible by codec stride");
  nn::NoGradGuard guard;
  model.set_training(false);

  bool masked = opts.use_mask && model.cfg.use_sge;
  for (const auto* p : payloads) masked = masked && p->mask_mode != edge::MaskMode::none;
  const auto cond = model.condition(lr_batch<T>(payloads), first.s,
                                    masked ? mask_batch<T>(payloads) : nn::Tensor<T>());

  const int n = static_cast<int>(payloads.size());
  const nn::Shape one{1, model.codec.channels(), first.height / stride, first.width / stride};
  auto draw = [&](std::uint64_t stream) {
    std::vector<nn::Tensor<T>> parts;
    for (int i = 0; i < n; ++i) parts.push_back(gaussian<T>(one, seeds[i], stream));
    return n == 1 ? parts.front() : nn::concat(parts, 0);
  };
  const auto eps_fn = predictor(model.den, s);
  const bool clip = opts.clip_x0 && model.codec.kind == LatentCodecKind::identity;
  auto x = draw(0);
  for (int t = s.steps - 1; t >= 0; --t) {
    x = denoise_step(x, t, cond, eps_fn, s, t > 0 ? draw(static_cast<std::uint64_t>(t) + 1) : nn::Tensor<T>(),
                     clip);
  }
  auto img = nn::affine(model.codec.decode(x), T(0.5), T(0.5));
  img = nn::clamp(model.post.forward(img), T(0), T(1));
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(from_tensor(img, i));
  return out;
}

#define SALD_INSTANTIATE_SAMPLER(T)                                                                      \
  template EpsPredictor<T> predictor(Denoiser<T>&, const NoiseSchedule&);                             \
  template DiffusionDraw<T> diffusion_draw(const nn::Tensor<T>&, const Condition<T>&,                 \
                                           const EpsPredictor<T>&, const NoiseSchedule&, std::uint64_t); \
  template nn::Tensor<T> denoise_step(const nn::Tensor<T>&, int, const Condition<T>&,                 \
                                      const EpsPredictor<T>&, const NoiseSchedule&, const nn::Tensor<T>&, bool); \
  template nn::Tensor<T> lr_batch(const std::vector<const edge::Payload*>&);                          \
  template nn::Tensor<T> mask_batch(const std::vector<const edge::Payload*>&);                        \
  template std::vector<Image> sample(SaldModel<T>&, const std::vector<const edge::Payload*>&,         \
                                     std::span<const std::uint64_t>, const NoiseSchedule&, const SampleOptions&);

SALD_INSTANTIATE_SAMPLER(float)
SALD_INSTANTIATE_SAMPLER(double)

}  // namespace sald::diffusion
