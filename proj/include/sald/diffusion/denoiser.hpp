// SPDX-License-Identifier: Apache-2.0
//
// Conditional epsilon-predictor and the modules wrapped around it.
//
// Denoiser layout (channels c0/c1/c2, default 16/32/64):
//
//   [x_t, I_LR up] -> stem 3x3 -> enc0 ------------------------------> merge0 -> dec0 -> out 3x3
//                                   \-> down 3x3/2 -> enc1 ------> merge1 -> dec1 -/
//                                                      \-> down 3x3/2 -> enc2 -> dec2 -/
//
// enc*/dec* are SGLK blocks gated by the SGE feature at their resolution, or
// plain residual conv blocks when SGLK is disabled. Every stage receives a
// per-channel bias projected from a sinusoidal embedding of the time level.
#pragma once

#include <string>
#include <vector>

#include "sald/guidance/sge.hpp"
#include "sald/guidance/sglk.hpp"

namespace sald::diffusion {

enum class LatentCodecKind { identity, tiny_ae };

std::string to_string(LatentCodecKind k);
LatentCodecKind parse_codec(const std::string& s);

struct ModelConfig {
  std::vector<int> channels{16, 32, 64};
  int kernel = 9;
  bool use_sge = true;
  bool use_sglk = true;
  LatentCodecKind codec = LatentCodecKind::identity;
  int time_dim = 32;
  int time_hidden = 64;
  std::vector<int> sge_channels{8, 16, 32};
  double gamma_init = 1e-2;
};

/// Everything the denoiser is conditioned on besides x_t and t.
template <typename T>
struct Condition {
  nn::Tensor<T> lr_up;               // [N,3,h,w] at latent resolution, in [-1,1]
  std::vector<nn::Tensor<T>> f_stru;  // one per resolution; empty selects the mask-free path
};

/// [N, dim] sinusoidal features of time levels in [0,1].
template <typename T>
nn::Tensor<T> time_embedding(std::span<const double> levels, int dim);

/// x + SiLU(BN(conv3x3(x) + conv1x1(F_stru))), the stand-in when SGLK is off.
template <typename T>
struct PlainBlock {
  nn::Conv2d<T> conv;
  nn::Conv2d<T> inject;  // absent in mask-free models
  nn::BatchNorm2d<T> bn;

  PlainBlock() = default;
  PlainBlock(int channels, CounterRng& rng, bool with_inject);
  nn::Tensor<T> forward(const nn::Tensor<T>& x, const nn::Tensor<T>& f_stru);
  void set_training(bool on) { bn.training = on; }
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn);
};

template <typename T>
struct Block {
  bool gated = true;
  guidance::SGLK<T> sglk;
  PlainBlock<T> plain;

  nn::Tensor<T> forward(const nn::Tensor<T>& x, const nn::Tensor<T>& f_stru) {
    return gated ? sglk.forward(x, f_stru) : plain.forward(x, f_stru);
  }
  void set_training(bool on) { gated ? sglk.set_training(on) : plain.set_training(on); }
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
    gated ? sglk.visit(prefix, fn) : plain.visit(prefix, fn);
  }
};

template <typename T>
struct Denoiser {
  ModelConfig cfg;
  int latent_channels = 3;
  nn::Conv2d<T> stem;
  std::vector<Block<T>> enc, dec;
  std::vector<nn::Conv2d<T>> down;   // stride-2, c_i -> c_{i+1}
  std::vector<nn::Conv2d<T>> merge;  // 1x1 over [up(c_{i+1}), skip c_i] -> c_i
  nn::Linear<T> time_fc;
  std::vector<nn::Linear<T>> time_enc, time_dec;
  nn::Conv2d<T> out;

  Denoiser() = default;
  Denoiser(const ModelConfig& cfg, int latent_channels, CounterRng& rng);

  /// epsilon-hat for x_t [N,Cl,h,w]; `levels` holds one time level per sample.
  nn::Tensor<T> forward(const nn::Tensor<T>& x_t, std::span<const double> levels,
                        const Condition<T>& cond);

  int resolutions() const { return static_cast<int>(cfg.channels.size()); }
  void set_training(bool on);
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn);
};

/// Maps images in [-1,1] to the diffusion space and back. Identity by default;
/// tiny_ae is a frozen 2x-strided autoencoder.
template <typename T>
struct LatentCodec {
  LatentCodecKind kind = LatentCodecKind::identity;
  nn::Conv2d<T> enc1, enc2, dec1, dec2;

  LatentCodec() = default;
  LatentCodec(LatentCodecKind kind, CounterRng& rng);

  nn::Tensor<T> encode(const nn::Tensor<T>& x) const;
  nn::Tensor<T> decode(const nn::Tensor<T>& z) const;
  int channels() const { return kind == LatentCodecKind::identity ? 3 : 4; }
  int stride() const { return kind == LatentCodecKind::identity ? 1 : 2; }
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn);
};

/// 1x1 projector, channel gate (GAP -> 3->2 -> ReLU -> 2->3 -> sigmoid) and
/// a blended 3x3 box smoothing x + w (box(x) - x). Operates on [0,1] images.
template <typename T>
struct Postprocess {
  nn::Conv2d<T> projector;
  nn::Linear<T> gate_fc1, gate_fc2;
  nn::Tensor<T> smooth_w;
  bool gate_enabled = true;

  Postprocess() = default;
  explicit Postprocess(CounterRng& rng);

  nn::Tensor<T> forward(const nn::Tensor<T>& x) const;
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn);
};

/// SGE + denoiser + codec + post-processor.
template <typename T>
struct SaldModel {
  ModelConfig cfg;
  guidance::SGE<T> sge;
  Denoiser<T> den;
  LatentCodec<T> codec;
  Postprocess<T> post;

  SaldModel() = default;
  SaldModel(const ModelConfig& cfg, std::uint64_t seed);

  /// Conditioning from a dequantized LR batch [N,3,H/s,W/s] in [0,1] and a
  /// mask batch [N,1,H,W]; an undefined mask gives the mask-free path.
  Condition<T> condition(const nn::Tensor<T>& lr, int s, const nn::Tensor<T>& mask);

  /// Trainable parameters of the codec are reported as frozen.
  void visit(const nn::ParamVisitor<T>& fn);
  void set_training(bool on);
  std::size_t parameter_count();
};

}  // namespace sald::diffusion
