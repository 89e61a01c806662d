// SPDX-License-Identifier: Apache-2.0
#include "sald/training/loss.hpp"

#include <cmath>
#include <set>

#include "sald/error.hpp"

namespace sald::training {

using nlohmann::json;

void TrainConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw ConfigError("loss weights must be non-negative");
  if (!(lr_init > 0) || lr_min < 0 || lr_min > lr_init) throw ConfigError("need 0 <= lr_min <= lr_init, lr_init > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (timesteps < 2) throw ConfigError("timesteps must be at least 2");
  if (model.kernel < 1 || model.kernel % 2 == 0) throw ConfigError("SGLK kernel must be odd");
  if (codec_steps < 0) throw ConfigError("codec_steps must be non-negative");
}

json to_json(const diffusion::ModelConfig& c) {
  return {{"channels", c.channels},      {"kernel", c.kernel},
          {"use_sge", c.use_sge},        {"use_sglk", c.use_sglk},
          {"codec", diffusion::to_string(c.codec)},
          {"time_dim", c.time_dim},      {"time_hidden", c.time_hidden},
          {"sge_channels", c.sge_channels}, {"gamma_init", c.gamma_init}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

diffusion::ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"channels", "kernel", "use_sge", "use_sglk", "codec", "time_dim", "time_hidden",
                     "sge_channels", "gamma_init"},
                 "model config");
  diffusion::ModelConfig c;
  read(j, "channels", c.channels);
  read(j, "kernel", c.kernel);
  read(j, "use_sge", c.use_sge);
  read(j, "use_sglk", c.use_sglk);
  if (j.contains("codec")) c.codec = diffusion::parse_codec(j.at("codec").get<std::string>());
  read(j, "time_dim", c.time_dim);
  read(j, "time_hidden", c.time_hidden);
  read(j, "sge_channels", c.sge_channels);
  read(j, "gamma_init", c.gamma_init);
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"lambda3", c.lambda3},
          {"lr_init", c.lr_init},
          {"lr_min", c.lr_min},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"data_seed", c.data_seed},
          {"timesteps", c.timesteps},
          {"model", to_json(c.model)},
          {"encode",
           {{"s", c.encode.s},
            {"q", c.encode.q},
            {"mask_source", edge::to_string(c.encode.mask_source)},
            {"saliency_threshold", c.encode.saliency_threshold},
            {"saliency_dilation", c.encode.saliency_dilation},
            {"budget", c.encode.budget}}},
          {"codec_steps", c.codec_steps},
          {"codec_lr", c.codec_lr}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j, {"lambda1", "lambda2", "lambda3", "lr_init", "lr_min", "beta1", "beta2", "weight_decay",
                     "epochs", "batch_size", "seed", "data_seed", "timesteps", "model", "encode", "codec_steps",
                     "codec_lr"},
                 "train config");
  TrainConfig c;
  read(j, "lambda1", c.lambda1);
  read(j, "lambda2", c.lambda2);
  read(j, "lambda3", c.lambda3);
  read(j, "lr_init", c.lr_init);
  read(j, "lr_min", c.lr_min);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "weight_decay", c.weight_decay);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "data_seed", c.data_seed);
  read(j, "timesteps", c.timesteps);
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("encode")) {
    const auto& e = j.at("encode");
    reject_unknown(e, {"s", "q", "mask_source", "saliency_threshold", "saliency_dilation", "budget"}, "encode config");
    read(e, "s", c.encode.s);
    read(e, "q", c.encode.q);
    if (e.contains("mask_source")) c.encode.mask_source = edge::parse_mask_source(e.at("mask_source").get<std::string>());
    read(e, "saliency_threshold", c.encode.saliency_threshold);
    read(e, "saliency_dilation", c.encode.saliency_dilation);
    read(e, "budget", c.encode.budget);
  }
  read(j, "codec_steps", c.codec_steps);
  read(j, "codec_lr", c.codec_lr);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
PerceptualNet<T>::PerceptualNet(std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, hash_tag("perceptual")));
  stages.emplace_back(3, 8, 3, rng, nn::Conv2dOptions{1, 1, 1});
  stages.emplace_back(8, 16, 3, rng, nn::Conv2dOptions{2, 1, 1});
  stages.emplace_back(16, 32, 3, rng, nn::Conv2dOptions{2, 1, 1});
  for (auto& s : stages) {
    s.weight.set_requires_grad(false);
    s.bias.set_requires_grad(false);
  }
}

template <typename T>
std::vector<nn::Tensor<T>> PerceptualNet<T>::features(const nn::Tensor<T>& x) const {
  std::vector<nn::Tensor<T>> out;
  nn::Tensor<T> h = x;
  for (const auto& s : stages) {
    h = nn::relu(s(h));
    out.push_back(h);
  }
  return out;
}

template <typename T>
Batch<T> make_batch(const std::vector<const data::SceneSample*>& samples,
                    const std::vector<const edge::Payload*>& payloads) {
  if (samples.empty() || samples.size() != payloads.size()) throw ConfigError("batch needs one payload per sample");
  Batch<T> b;
  std::vector<const Image*> hr;
  for (const auto* s : samples) {
    hr.push_back(&s->hr);
    b.scene_seeds.push_back(s->seed);
  }
  b.hr = to_tensor<T>(hr);
  b.lr = diffusion::lr_batch<T>(payloads);
  b.mask = diffusion::mask_batch<T>(payloads);
  b.s = payloads.front()->s;
  return b;
}

template <typename T>
nn::Tensor<T> estimate_x0(const nn::Tensor<T>& x_t, const nn::Tensor<T>& eps_hat, std::span<const int> t,
                          const diffusion::NoiseSchedule& s) {
  std::vector<T> noise_coef, inv_signal;
  for (int ti : t) {
    s.check_step(ti);
    noise_coef.push_back(static_cast<T>(-std::sqrt(1.0 - s.alpha_bar[ti])));
    inv_signal.push_back(static_cast<T>(1.0 / std::sqrt(s.alpha_bar[ti])));
  }
  const auto num = nn::add(x_t, nn::scale_per_sample(eps_hat, std::span<const T>(noise_coef)));
  return nn::scale_per_sample(num, std::span<const T>(inv_signal));
}

template <typename T>
LossBreakdown<T> total_loss(diffusion::SaldModel<T>& model, const PerceptualNet<T>& phi, const Batch<T>& batch,
                            const TrainConfig& cfg, const diffusion::NoiseSchedule& s, std::uint64_t seed) {
  LossBreakdown<T> r;
  const auto cond = model.condition(batch.lr, batch.s, batch.mask);
  const auto x0 = model.codec.encode(nn::affine(batch.hr, T(2), T(-1)));
  r.draw = diffusion::diffusion_draw(x0, cond, diffusion::predictor(model.den, s), s, seed);
  r.diff = r.draw.loss;
  r.x0_hat = nn::clamp(estimate_x0(r.draw.x_t, r.draw.eps_hat, std::span<const int>(r.draw.t), s), T(-1), T(1));
  r.recon = model.post.forward(nn::affine(model.codec.decode(r.x0_hat), T(0.5), T(0.5)));
  r.rec = nn::mean_abs_diff(batch.hr, r.recon);
  const auto fa = phi.features(batch.hr);
  const auto fb = phi.features(r.recon);
  r.per = nn::mse(fa[0], fb[0]);
  for (std::size_t j = 1; j < fa.size(); ++j) r.per = nn::add(r.per, nn::mse(fa[j], fb[j]));
  r.total = nn::add(nn::add(nn::affine(r.diff, static_cast<T>(cfg.lambda1), T(0)),
                            nn::affine(r.rec, static_cast<T>(cfg.lambda2), T(0))),
                    nn::affine(r.per, static_cast<T>(cfg.lambda3), T(0)));
  return r;
}

#define SALD_INSTANTIATE_LOSS(T)                                                                             \
  template struct PerceptualNet<T>;                                                                         \
  template Batch<T> make_batch(const std::vector<const data::SceneSample*>&,                                \
                               const std::vector<const edge::Payload*>&);                                   \
  template nn::Tensor<T> estimate_x0(const nn::Tensor<T>&, const nn::Tensor<T>&, std::span<const int>,      \
                                     const diffusion::NoiseSchedule&);                                      \
  template LossBreakdown<T> total_loss(diffusion::SaldModel<T>&, const PerceptualNet<T>&, const Batch<T>&, \
                                       const TrainConfig&, const diffusion::NoiseSchedule&, std::uint64_t);

SALD_INSTANTIATE_LOSS(float)
SALD_INSTANTIATE_LOSS(double)

}  // namespace sald::training
