// SPDX-License-Identifier: Apache-2.0
//
// Composite objective  lambda1 L_diff + lambda2 L_rec + lambda3 L_per.
// The reconstruction feeding L_rec and L_per is the single-step estimate
//   x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t),
// clamped to [-1,1], decoded and post-processed.
#pragma once

#include <vector>

#include <json.hpp>

#include "sald/data/scene.hpp"
#include "sald/diffusion/sampler.hpp"
#include "sald/edge/encoder.hpp"

namespace sald::training {

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double lambda3 = 0.01;
  double lr_init = 2e-4;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  int epochs = 1;
  int batch_size = 8;
  std::uint64_t seed = 0;
  /// Seeds the fixed perceptual feature extractor.
  std::uint64_t data_seed = 0;
  int timesteps = 50;
  diffusion::ModelConfig model;
  edge::EncodeOptions encode;
  /// Reconstruction pre-training of the tiny_ae codec.
  int codec_steps = 300;
  double codec_lr = 2e-3;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const diffusion::ModelConfig& c);
diffusion::ModelConfig model_config_from_json(const nlohmann::json& j);

/// Fixed random 3-stage conv feature extractor (conv3x3 + ReLU, strides 1/2/2,
/// 8/16/32 channels). Weights are drawn from `seed` and never trained.
template <typename T>
struct PerceptualNet {
  std::vector<nn::Conv2d<T>> stages;

  PerceptualNet() = default;
  explicit PerceptualNet(std::uint64_t seed);
  std::vector<nn::Tensor<T>> features(const nn::Tensor<T>& x) const;
};

template <typename T>
struct Batch {
  nn::Tensor<T> hr;    // [N,3,H,W] in [0,1]
  nn::Tensor<T> lr;    // [N,3,H/s,W/s] dequantized
  nn::Tensor<T> mask;  // [N,1,H,W]
  int s = 4;
  std::vector<std::uint64_t> scene_seeds;
};

template <typename T>
Batch<T> make_batch(const std::vector<const data::SceneSample*>& samples,
                    const std::vector<const edge::Payload*>& payloads);

template <typename T>
struct LossBreakdown {
  nn::Tensor<T> total, diff, rec, per;
  diffusion::DiffusionDraw<T> draw;
  nn::Tensor<T> x0_hat;  // clamped single-step estimate
  nn::Tensor<T> recon;   // I_SR in [0,1] space
};

template <typename T>
nn::Tensor<T> estimate_x0(const nn::Tensor<T>& x_t, const nn::Tensor<T>& eps_hat, std::span<const int> t,
                          const diffusion::NoiseSchedule& s);

template <typename T>
LossBreakdown<T> total_loss(diffusion::SaldModel<T>& model, const PerceptualNet<T>& phi, const Batch<T>& batch,
                            const TrainConfig& cfg, const diffusion::NoiseSchedule& s, std::uint64_t seed);

}  // namespace sald::training
