// SPDX-License-Identifier: Apache-2.0
#include "sald/channel/channel.hpp"

#include <cmath>

#include "sald/error.hpp"
#include "sald/rng.hpp"

namespace sald::channel {

void validate(const ChannelConfig& cfg) {
  if (!(cfg.mask_missing_rate >= 0.0 && cfg.mask_missing_rate <= 1.0)) {
    throw ConfigError("mask missing rate must be in [0,1]");
  }
  if (cfg.budget == 0) throw ConfigError("channel budget must be positive");
}

std::size_t pixels_to_drop(double r, std::size_t fg) {
  // The epsilon absorbs representation error, e.g. 0.3 * 200 = 59.999...
  const double k = std::floor(r * static_cast<double>(fg) + 1e-9);
  return std::min(fg, static_cast<std::size_t>(std::max(0.0, k)));
}

namespace {

std::vector<std::vector<std::size_t>> components(const Mask& m) {
  std::vector<int> label(m.data.size(), -1);
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.data.size(); ++start) {
    if (!m.data[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(comps.size());
    comps.emplace_back();
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      comps.back().push_back(i);
      const int y = static_cast<int>(i / m.width), x = static_cast<int>(i % m.width);
      const int ny[] = {y - 1, y + 1, y, y};
      const int nx[] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= m.height || nx[k] < 0 || nx[k] >= m.width) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * m.width + nx[k];
        if (m.data[j] && label[j] < 0) {
          label[j] = id;
          stack.push_back(j);
        }
      }
    }
  }
  return comps;
}

}  // namespace

Mask degrade_mask(const Mask& mask, double r, std::uint64_t seed, DropMode mode) {
  Mask out = mask;
  CounterRng rng(seed);
  if (mode == DropMode::pixels) {
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < mask.data.size(); ++i)
      if (mask.data[i]) fg.push_back(i);
    const std::size_t k = pixels_to_drop(r, fg.size());
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(fg.size() - i);
      std::swap(fg[i], fg[j]);
      out.data[fg[i]] = 0;
    }
    return out;
  }
  auto comps = components(mask);
  const std::size_t target = pixels_to_drop(r, mask.count());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < comps.size() && dropped < target; ++i) {
    const std::size_t j = i + rng.below(comps.size() - i);
    std::swap(comps[i], comps[j]);
    for (std::size_t p : comps[i]) out.data[p] = 0;
    dropped += comps[i].size();
  }
  return out;
}

edge::Payload transmit(const edge::Payload& payload, const ChannelConfig& cfg) {
  validate(cfg);
  const std::size_t r = edge::payload_bytes(payload);
  if (r > cfg.budget) throw TransmissionRejected(r, cfg.budget);
  edge::Payload out = payload;
  if (cfg.mask_missing_rate > 0.0) {
    out.mask = degrade_mask(payload.mask, cfg.mask_missing_rate, cfg.seed, cfg.mode);
  }
  return out;
}

std::vector<std::uint8_t> transmit_bytes(std::span<const std::uint8_t> bytes,
                                         const ChannelConfig& cfg) {
  validate(cfg);
  if (bytes.size() > cfg.budget) throw TransmissionRejected(bytes.size(), cfg.budget);
  return edge::serialize(transmit(edge::deserialize(bytes), cfg));
}

}  // namespace sald::channel
