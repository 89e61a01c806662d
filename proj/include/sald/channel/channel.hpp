// SPDX-License-Identifier: Apache-2.0
//
// Simulated downlink: enforces the byte budget and degrades the structural
// mask. The low-resolution samples always pass through untouched.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sald/edge/payload.hpp"

namespace sald::channel {

enum class DropMode {
  pixels,      // zero floor(r |FG|) foreground pixels chosen uniformly
  components,  // drop whole 4-connected components until >= that many pixels
};

struct ChannelConfig {
  std::size_t budget = 150000;
  double mask_missing_rate = 0.0;
  std::uint64_t seed = 0;
  DropMode mode = DropMode::pixels;
};

void validate(const ChannelConfig& cfg);

/// Number of foreground pixels removed at rate r from a mask with `fg` pixels.
std::size_t pixels_to_drop(double r, std::size_t fg);

/// Throws TransmissionRejected if R(payload) > budget.
edge::Payload transmit(const edge::Payload& payload, const ChannelConfig& cfg);

/// Byte-level variant: deserialize, transmit, serialize.
std::vector<std::uint8_t> transmit_bytes(std::span<const std::uint8_t> bytes,
                                         const ChannelConfig& cfg);

Mask degrade_mask(const Mask& mask, double r, std::uint64_t seed, DropMode mode = DropMode::pixels);

}  // namespace sald::channel
