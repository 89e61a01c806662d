// SPDX-License-Identifier: Apache-2.0
#include "sald/guidance/sge.hpp"

#include <bit>

#include "sald/error.hpp"

namespace sald::guidance {

int sge_level_for(int factor, int blocks) {
  if (factor < 1 || !std::has_single_bit(static_cast<unsigned>(factor))) {
    throw ConfigError("SGE target factor must be a power of two");
  }
  return std::min(blocks, std::countr_zero(static_cast<unsigned>(factor)) + 1);
}

template <typename T>
SGE<T>::SGE(const SGEConfig& c, CounterRng& rng) : cfg(c) {
  if (cfg.block_channels.empty()) throw ConfigError("SGE needs K >= 1 blocks");
  if (cfg.target_factors.size() != cfg.target_channels.size()) {
    throw ConfigError("SGE target factors and channels differ in length");
  }
  int cin = 1;
  for (int c : cfg.block_channels) {
    convs.push_back(nn::Conv2d<T>::same(cin, c, 3, rng));
    bns.emplace_back(c);
    cin = c;
  }
  for (std::size_t j = 0; j < cfg.target_factors.size(); ++j) {
    const int level = sge_level_for(cfg.target_factors[j], blocks());
    align.push_back(nn::Conv2d<T>::same(cfg.block_channels[level - 1], cfg.target_channels[j], 1, rng));
  }
}

template <typename T>
std::vector<nn::Tensor<T>> SGE<T>::pyramid(const nn::Tensor<T>& mask) {
  if (mask.ndim() != 4 || mask.dim(1) != 1) throw DimensionError("SGE expects a [N,1,H,W] mask");
  const int k = blocks();
  if (mask.dim(2) % (1 << k) || mask.dim(3) % (1 << k)) {
    throw DimensionError("mask size " + nn::to_string(mask.shape()) + " not divisible by 2^K = " +
                         std::to_string(1 << k));
  }
  std::vector<nn::Tensor<T>> levels;
  nn::Tensor<T> f = mask;
  for (int i = 0; i < k; ++i) {
    f = nn::resample(nn::relu(bns[i](convs[i](f))), 2, nn::Direction::down);
    levels.push_back(f);
  }
  return levels;
}

template <typename T>
std::vector<nn::Tensor<T>> SGE<T>::forward(const nn::Tensor<T>& mask) {
  const auto levels = pyramid(mask);
  std::vector<nn::Tensor<T>> out;
  for (std::size_t j = 0; j < align.size(); ++j) {
    const int factor = cfg.target_factors[j];
    const int level = sge_level_for(factor, blocks());
    const int level_factor = 1 << level;
    nn::Tensor<T> f = levels[level - 1];
    if (level_factor > factor) {
      f = nn::resample(f, level_factor / factor, nn::Direction::up);
    } else if (level_factor < factor) {
      f = nn::resample(f, factor / level_factor, nn::Direction::down);
    }
    out.push_back(align[j](f));
  }
  return out;
}

template <typename T>
void SGE<T>::set_training(bool on) {
  for (auto& b : bns) b.training = on;
}

template <typename T>
void SGE<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    convs[i].visit(prefix + ".block" + std::to_string(i) + ".conv", fn);
    bns[i].visit(prefix + ".block" + std::to_string(i) + ".bn", fn);
  }
  for (std::size_t j = 0; j < align.size(); ++j) align[j].visit(prefix + ".align" + std::to_string(j), fn);
}

template struct SGE<float>;
template struct SGE<double>;

}  // namespace sald::guidance
