// SPDX-License-Identifier: Apache-2.0
#include "sald/diffusion/denoiser.hpp"

#include <cmath>

#include "sald/error.hpp"

namespace sald::diffusion {

std::string to_string(LatentCodecKind k) {
  return k == LatentCodecKind::identity ? "identity" : "tiny_ae";
}

LatentCodecKind parse_codec(const std::string& s) {
  if (s == "identity") return LatentCodecKind::identity;
  if (s == "tiny_ae") return LatentCodecKind::tiny_ae;
  throw ConfigError("unknown latent codec '" + s + "' (identity|tiny_ae)");
}

template <typename T>
nn::Tensor<T> time_embedding(std::span<const double> levels, int dim) {
  if (dim < 2 || dim % 2) throw ConfigError("time embedding dim must be even");
  const int half = dim / 2;
  std::vector<T> v(levels.size() * dim);
  for (std::size_t n = 0; n < levels.size(); ++n) {
    const double tt = 1000.0 * levels[n];
    for (int k = 0; k < half; ++k) {
      const double w = std::exp(-std::log(10000.0) * k / half);
      v[n * dim + k] = static_cast<T>(std::sin(tt * w));
      v[n * dim + half + k] = static_cast<T>(std::cos(tt * w));
    }
  }
  return nn::Tensor<T>({static_cast<int>(levels.size()), dim}, std::move(v));
}

// ---------------------------------------------------------------------------

template <typename T>
PlainBlock<T>::PlainBlock(int channels, CounterRng& rng, bool with_inject)
    : conv(nn::Conv2d<T>::same(channels, channels, 3, rng, 1, false)), bn(channels) {
  if (with_inject) inject = nn::Conv2d<T>::same(channels, channels, 1, rng, 1, false);
}

template <typename T>
nn::Tensor<T> PlainBlock<T>::forward(const nn::Tensor<T>& x, const nn::Tensor<T>& f_stru) {
  auto y = conv(x);
  if (f_stru.defined()) {
    if (!inject.weight.defined()) throw DimensionError("plain block built without F_stru input");
    if (f_stru.shape() != x.shape()) throw DimensionError("plain block: F_stru misaligned");
    y = nn::add(y, inject(f_stru));
  }
  return nn::add(x, nn::silu(bn(y)));
}

template <typename T>
void PlainBlock<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
  conv.visit(prefix + ".conv", fn);
  if (inject.weight.defined()) inject.visit(prefix + ".inject", fn);
  bn.visit(prefix + ".bn", fn);
}

// ---------------------------------------------------------------------------

template <typename T>
Denoiser<T>::Denoiser(const ModelConfig& c, int latent, CounterRng& rng) : cfg(c), latent_channels(latent) {
  const auto& ch = cfg.channels;
  if (ch.empty()) throw ConfigError("denoiser needs at least one resolution");
  stem = nn::Conv2d<T>::same(latent + 3, ch[0], 3, rng);
  time_fc = nn::Linear<T>(cfg.time_dim, cfg.time_hidden, rng);
  auto make_block = [&](int c) {
    Block<T> b;
    b.gated = cfg.use_sglk;
    if (b.gated) {
      b.sglk = guidance::SGLK<T>({c, cfg.kernel, cfg.gamma_init}, rng);
    } else {
      b.plain = PlainBlock<T>(c, rng, cfg.use_sge);
    }
    return b;
  };
  for (std::size_t i = 0; i < ch.size(); ++i) {
    if (i > 0) down.emplace_back(ch[i - 1], ch[i], 3, rng, nn::Conv2dOptions{2, 1, 1});
    enc.push_back(make_block(ch[i]));
    time_enc.emplace_back(cfg.time_hidden, ch[i], rng);
  }
  for (std::size_t i = 0; i < ch.size(); ++i) {
    if (i + 1 < ch.size()) merge.push_back(nn::Conv2d<T>::same(ch[i + 1] + ch[i], ch[i], 1, rng));
    dec.push_back(make_block(ch[i]));
    time_dec.emplace_back(cfg.time_hidden, ch[i], rng);
  }
  out = nn::Conv2d<T>::same(ch[0], latent, 3, rng);
  out.zero();
}

template <typename T>
nn::Tensor<T> Denoiser<T>::forward(const nn::Tensor<T>& x_t, std::span<const double> levels,
                                   const Condition<T>& cond) {
  const int n_res = resolutions();
  if (x_t.ndim() != 4 || x_t.dim(1) != latent_channels) {
    throw DimensionError("denoiser input " + nn::to_string(x_t.shape()) + " needs " +
                         std::to_string(latent_channels) + " channels");
  }
  if (static_cast<int>(levels.size()) != x_t.dim(0)) throw DimensionError("one time level per sample");
  const int step = 1 << (n_res - 1);
  if (x_t.dim(2) % step || x_t.dim(3) % step) {
    throw DimensionError("latent size " + nn::to_string(x_t.shape()) + " not divisible by " +
                         std::to_string(step));
  }
  if (!cond.lr_up.defined() || cond.lr_up.dim(0) != x_t.dim(0) || cond.lr_up.dim(1) != 3 ||
      cond.lr_up.dim(2) != x_t.dim(2) || cond.lr_up.dim(3) != x_t.dim(3)) {
    throw DimensionError("condition image misaligned with latent " + nn::to_string(x_t.shape()));
  }
  if (!cond.f_stru.empty() && static_cast<int>(cond.f_stru.size()) != n_res) {
    throw DimensionError("need one F_stru per resolution");
  }
  auto f = [&](int i) { return cond.f_stru.empty() ? nn::Tensor<T>() : cond.f_stru[i]; };

  const auto temb = nn::silu(time_fc(time_embedding<T>(levels, cfg.time_dim)));
  auto h = stem(nn::concat<T>({x_t, cond.lr_up}, 1));
  std::vector<nn::Tensor<T>> skips;
  for (int i = 0; i < n_res; ++i) {
    if (i > 0) h = nn::silu(down[i - 1](h));
    h = nn::add_channel_bias(h, time_enc[i](temb));
    h = enc[i].forward(h, f(i));
    skips.push_back(h);
  }
  for (int i = n_res - 1; i >= 0; --i) {
    if (i < n_res - 1) {
      h = nn::silu(merge[i](nn::concat<T>({nn::resample(h, 2, nn::Direction::up), skips[i]}, 1)));
    }
    h = nn::add_channel_bias(h, time_dec[i](temb));
    h = dec[i].forward(h, f(i));
  }
  return out(nn::silu(h));
}

template <typename T>
void Denoiser<T>::set_training(bool on) {
  for (auto& b : enc) b.set_training(on);
  for (auto& b : dec) b.set_training(on);
}

template <typename T>
void Denoiser<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
  stem.visit(prefix + ".stem", fn);
  time_fc.visit(prefix + ".time_fc", fn);
  for (int i = 0; i < resolutions(); ++i) {
    const auto s = std::to_string(i);
    if (i > 0) down[i - 1].visit(prefix + ".down" + s, fn);
    enc[i].visit(prefix + ".enc" + s, fn);
    time_enc[i].visit(prefix + ".time_enc" + s, fn);
    if (i + 1 < resolutions()) merge[i].visit(prefix + ".merge" + s, fn);
    dec[i].visit(prefix + ".dec" + s, fn);
    time_dec[i].visit(prefix + ".time_dec" + s, fn);
  }
  out.visit(prefix + ".out", fn);
}

// ---------------------------------------------------------------------------

template <typename T>
LatentCodec<T>::LatentCodec(LatentCodecKind k, CounterRng& rng) : kind(k) {
  if (kind == LatentCodecKind::identity) return;
  enc1 = nn::Conv2d<T>(3, 16, 3, rng, {2, 1, 1});
  enc2 = nn::Conv2d<T>::same(16, 4, 3, rng);
  dec1 = nn::Conv2d<T>::same(4, 16, 3, rng);
  dec2 = nn::Conv2d<T>::same(16, 3, 3, rng);
}

template <typename T>
nn::Tensor<T> LatentCodec<T>::encode(const nn::Tensor<T>& x) const {
  if (kind == LatentCodecKind::identity) return x;
  if (x.dim(2) % 2 || x.dim(3) % 2) throw DimensionError("tiny_ae needs even image size");
  return enc2(nn::silu(enc1(x)));
}

template <typename T>
nn::Tensor<T> LatentCodec<T>::decode(const nn::Tensor<T>& z) const {
  if (kind == LatentCodecKind::identity) return z;
  return dec2(nn::silu(dec1(nn::resample(z, 2, nn::Direction::up))));
}

template <typename T>
void LatentCodec<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
  if (kind == LatentCodecKind::identity) return;
  enc1.visit(prefix + ".enc1", fn);
  enc2.visit(prefix + ".enc2", fn);
  dec1.visit(prefix + ".dec1", fn);
  dec2.visit(prefix + ".dec2", fn);
}

// ---------------------------------------------------------------------------

template <typename T>
Postprocess<T>::Postprocess(CounterRng& rng)
    : projector(nn::Conv2d<T>::same(3, 3, 1, rng)), gate_fc1(3, 2, rng), gate_fc2(2, 3, rng) {
  projector.zero();
  for (int c = 0; c < 3; ++c) projector.weight.data()[c * 3 + c] = T(1);
  for (auto& v : gate_fc2.weight.data()) v *= T(0.1);
  for (auto& v : gate_fc2.bias.data()) v = static_cast<T>(std::log(0.98 / 0.02));
  smooth_w = nn::Tensor<T>({1}, T(0.1), true);
}

template <typename T>
nn::Tensor<T> Postprocess<T>::forward(const nn::Tensor<T>& x) const {
  auto p = projector(x);
  if (gate_enabled) {
    const auto g = nn::sigmoid(gate_fc2(nn::relu(gate_fc1(nn::global_avg_pool(p)))));
    p = nn::mul_channel(p, g);
  }
  return nn::add(p, nn::scale(nn::sub(nn::box_filter3(p), p), smooth_w));
}

template <typename T>
void Postprocess<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
  projector.visit(prefix + ".projector", fn);
  gate_fc1.visit(prefix + ".gate_fc1", fn);
  gate_fc2.visit(prefix + ".gate_fc2", fn);
  fn(prefix + ".smooth_w", smooth_w, true);
}

// ---------------------------------------------------------------------------

template <typename T>
SaldModel<T>::SaldModel(const ModelConfig& c, std::uint64_t seed) : cfg(c) {
  CounterRng codec_rng(derive_seed(seed, hash_tag("codec")));
  codec = LatentCodec<T>(cfg.codec, codec_rng);
  if (cfg.use_sge) {
    guidance::SGEConfig sc;
    sc.block_channels = cfg.sge_channels;
    sc.target_channels = cfg.channels;
    sc.target_factors.clear();
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      sc.target_factors.push_back(codec.stride() << i);
    }
    CounterRng sge_rng(derive_seed(seed, hash_tag("sge")));
    sge = guidance::SGE<T>(sc, sge_rng);
  }
  CounterRng den_rng(derive_seed(seed, hash_tag("denoiser")));
  den = Denoiser<T>(cfg, codec.channels(), den_rng);
  CounterRng post_rng(derive_seed(seed, hash_tag("post")));
  post = Postprocess<T>(post_rng);
}

template <typename T>
Condition<T> SaldModel<T>::condition(const nn::Tensor<T>& lr, int s, const nn::Tensor<T>& mask) {
  Condition<T> c;
  const int factor = s / codec.stride();
  if (factor < 1 || s % codec.stride()) throw DimensionError("LR factor incompatible with codec stride");
  c.lr_up = nn::affine(lr, T(2), T(-1));
  if (factor > 1) c.lr_up = nn::resample(c.lr_up, factor, nn::Direction::up);
  if (cfg.use_sge && mask.defined()) c.f_stru = sge.forward(mask);
  return c;
}

template <typename T>
void SaldModel<T>::visit(const nn::ParamVisitor<T>& fn) {
  if (cfg.use_sge) sge.visit("sge", fn);
  den.visit("den", fn);
  codec.visit("codec", [&](const std::string& n, nn::Tensor<T>& t, bool) { fn(n, t, false); });
  post.visit("post", fn);
}

template <typename T>
void SaldModel<T>::set_training(bool on) {
  sge.set_training(on);
  den.set_training(on);
}

template <typename T>
std::size_t SaldModel<T>::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, nn::Tensor<T>& t, bool trainable) {
    if (trainable) n += t.numel();
  });
  return n;
}

template nn::Tensor<float> time_embedding(std::span<const double>, int);
template nn::Tensor<double> time_embedding(std::span<const double>, int);
template struct PlainBlock<float>;
template struct PlainBlock<double>;
template struct Denoiser<float>;
template struct Denoiser<double>;
template struct LatentCodec<float>;
template struct LatentCodec<double>;
template struct Postprocess<float>;
template struct Postprocess<double>;
template struct SaldModel<float>;
template struct SaldModel<double>;

}  // namespace sald::diffusion
