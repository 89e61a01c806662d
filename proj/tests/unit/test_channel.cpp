// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sald/channel/channel.hpp"
#include "sald/edge/encoder.hpp"
#include "sald/error.hpp"
#include "sald/rng.hpp"

using namespace sald;
using namespace sald::channel;

namespace {

edge::Payload payload_with_fg(std::size_t fg, std::uint64_t seed) {
  const auto s = data::generate_scene(seed, 64, data::SceneClass::buildings);
  auto p = edge::encode(s, {});
  p.mask = Mask(64, 64);
  CounterRng rng(seed);
  std::size_t placed = 0;
  while (placed < fg) {
    auto& v = p.mask.data[rng.below(p.mask.data.size())];
    if (!v) {
      v = 1;
      ++placed;
    }
  }
  return p;
}

}  // namespace

TEST_CASE("r=0 is the identity") {
  const auto p = edge::encode(data::generate_scene(1, 64, data::SceneClass::mixed), {});
  ChannelConfig cfg;
  const auto out = transmit(p, cfg);
  CHECK(edge::serialize(out) == edge::serialize(p));
  const auto bytes = edge::serialize(p);
  CHECK(transmit_bytes(bytes, cfg) == bytes);
  CHECK(transmit(out, cfg) == out);
}

TEST_CASE("r=1 clears the mask") {
  const auto p = edge::encode(data::generate_scene(2, 64, data::SceneClass::mixed), {});
  ChannelConfig cfg;
  cfg.mask_missing_rate = 1.0;
  const auto out = transmit(p, cfg);
  CHECK(out.mask.count() == 0);
  CHECK(out.lr == p.lr);
}

TEST_CASE("exact count and determinism") {
  const auto p = payload_with_fg(200, 3);
  REQUIRE(p.mask.count() == 200);
  ChannelConfig cfg;
  cfg.mask_missing_rate = 0.3;
  cfg.seed = 99;
  const auto a = transmit(p, cfg);
  const auto b = transmit(p, cfg);
  CHECK(a.mask.count() == 140);
  CHECK(a.mask == b.mask);
  cfg.seed = 100;
  CHECK(transmit(p, cfg).mask != a.mask);
  for (std::size_t i = 0; i < a.mask.data.size(); ++i) CHECK(a.mask.data[i] <= p.mask.data[i]);
}

TEST_CASE("drop count arithmetic") {
  CHECK(pixels_to_drop(0.3, 200) == 60);
  CHECK(pixels_to_drop(0.1, 30) == 3);
  CHECK(pixels_to_drop(0.2, 9) == 1);
  CHECK(pixels_to_drop(1.0, 17) == 17);
  CHECK(pixels_to_drop(0.0, 17) == 0);
}

TEST_CASE("lr_data survives every rate") {
  const auto p = edge::encode(data::generate_scene(4, 64, data::SceneClass::vehicles_dense), {});
  for (double r : {0.0, 0.1, 0.2, 0.3, 0.5, 1.0}) {
    ChannelConfig cfg;
    cfg.mask_missing_rate = r;
    cfg.seed = 5;
    const auto out = transmit(p, cfg);
    CHECK(out.lr == p.lr);
    CHECK(out.mask.count() == p.mask.count() - pixels_to_drop(r, p.mask.count()));
  }
}

TEST_CASE("component drop mode") {
  const auto p = edge::encode(data::generate_scene(6, 64, data::SceneClass::vehicles_dense), {});
  ChannelConfig cfg;
  cfg.mask_missing_rate = 0.5;
  cfg.mode = DropMode::components;
  const auto out = transmit(p, cfg);
  CHECK(out.mask.count() <= p.mask.count() - pixels_to_drop(0.5, p.mask.count()));
  for (std::size_t i = 0; i < out.mask.data.size(); ++i) CHECK(out.mask.data[i] <= p.mask.data[i]);
}

TEST_CASE("budget and config checks") {
  const auto p = edge::encode(data::generate_scene(7, 64, data::SceneClass::mixed), {});
  ChannelConfig cfg;
  cfg.budget = edge::payload_bytes(p) - 1;
  try {
    transmit(p, cfg);
    FAIL("expected rejection");
  } catch (const TransmissionRejected& e) {
    CHECK(e.actual() == edge::payload_bytes(p));
  }
  cfg.budget = edge::payload_bytes(p);
  CHECK_NOTHROW(transmit(p, cfg));
  cfg.mask_missing_rate = 1.5;
  CHECK_THROWS_AS(transmit(p, cfg), ConfigError);
  cfg.mask_missing_rate = 0.0;
  cfg.budget = 0;
  CHECK_THROWS_AS(transmit(p, cfg), ConfigError);
}
