// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "sald/error.hpp"
#include "sald/guidance/sge.hpp"
#include "sald/guidance/sglk.hpp"

using namespace sald;
using namespace sald::guidance;
using nn::Tensor;
using Td = Tensor<double>;
namespace oracle = sald::testing::oracle;

namespace {

void randomize(Td& t, CounterRng& rng, double lo, double hi) {
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
}

void randomize_bn(nn::BatchNorm2d<double>& bn, CounterRng& rng) {
  randomize(bn.gamma, rng, 0.5, 1.5);
  randomize(bn.beta, rng, -0.3, 0.3);
}

Td random_mask(int n, int h, int w, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n) * h * w);
  for (auto& x : v) x = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return Td({n, 1, h, w}, std::move(v));
}

SGLK<double> random_sglk(int ch, int k, std::uint64_t seed) {
  CounterRng rng(seed);
  SGLK<double> b({ch, k, 1e-2}, rng);
  randomize_bn(b.detail_bn, rng);
  randomize_bn(b.context_bn, rng);
  randomize_bn(b.res_bn, rng);
  randomize(b.gate_proj.bias, rng, -0.5, 0.5);
  b.gamma.data()[0] = rng.uniform(0.3, 1.2);
  return b;
}

}  // namespace

TEST_CASE("sge level selection") {
  CHECK(sge_level_for(1, 3) == 1);
  CHECK(sge_level_for(2, 3) == 2);
  CHECK(sge_level_for(4, 3) == 3);
  CHECK(sge_level_for(16, 3) == 3);
  CHECK(sge_level_for(4, 1) == 1);
  CHECK_THROWS_AS(sge_level_for(3, 3), ConfigError);
  CHECK_THROWS_AS(sge_level_for(0, 3), ConfigError);
}

TEST_CASE("sge zero mask with zero biases gives zero features") {
  CounterRng rng(3);
  SGE<double> sge({}, rng);
  sge.visit("sge", [](const std::string& name, Td& t, bool) {
    if (name.ends_with(".bias") || name.ends_with(".beta")) {
      for (auto& v : t.data()) v = 0.0;
    }
  });
  for (bool training : {true, false}) {
    sge.set_training(training);
    const auto feats = sge.forward(Td({1, 1, 16, 16}, 0.0));
    REQUIRE(feats.size() == 3);
    for (const auto& f : feats)
      for (double v : f.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("sge shapes") {
  CounterRng rng(4);
  SUBCASE("K=1 on 8x8 yields one 4x4 level") {
    SGE<double> sge({{8}, {1}, {16}}, rng);
    const auto levels = sge.pyramid(random_mask(1, 8, 8, 1));
    REQUIRE(levels.size() == 1);
    CHECK(levels[0].shape() == nn::Shape{1, 8, 4, 4});
  }
  SUBCASE("default pyramid and aligned outputs") {
    SGE<double> sge({}, rng);
    const auto mask = random_mask(2, 32, 32, 2);
    const auto levels = sge.pyramid(mask);
    CHECK(levels[0].shape() == nn::Shape{2, 8, 16, 16});
    CHECK(levels[1].shape() == nn::Shape{2, 16, 8, 8});
    CHECK(levels[2].shape() == nn::Shape{2, 32, 4, 4});
    const auto feats = sge.forward(mask);
    CHECK(feats[0].shape() == nn::Shape{2, 16, 32, 32});
    CHECK(feats[1].shape() == nn::Shape{2, 32, 16, 16});
    CHECK(feats[2].shape() == nn::Shape{2, 64, 8, 8});
  }
  SUBCASE("indivisible resolution") {
    SGE<double> sge({}, rng);
    CHECK_THROWS_AS(sge.forward(random_mask(1, 12, 12, 3)), DimensionError);
    CHECK_THROWS_AS(sge.forward(Td({1, 2, 16, 16})), DimensionError);
  }
  SUBCASE("config errors") {
    CHECK_THROWS_AS(SGE<double>({{}, {}, {}}, rng), ConfigError);
    CHECK_THROWS_AS(SGE<double>({{8}, {1, 2}, {16}}, rng), ConfigError);
  }
}

TEST_CASE("sge matches a straight-line composition") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    CounterRng rng(seed);
    SGE<double> sge({}, rng);
    for (auto& bn : sge.bns) randomize_bn(bn, rng);
    const auto mask = random_mask(1, 16, 16, seed * 7);
    const auto feats = sge.forward(mask);

    oracle::Arr f = oracle::from(mask);
    std::vector<oracle::Arr> levels;
    for (int i = 0; i < 3; ++i) {
      auto c = oracle::conv(f, sge.convs[i].weight, sge.convs[i].bias, 1, 1, 1);
      auto b = oracle::bn_train(c, sge.bns[i].gamma, sge.bns[i].beta);
      f = oracle::avgpool(oracle::map(b, oracle::relu), 2);
      levels.push_back(f);
    }
    for (int j = 0; j < 3; ++j) {
      // target factors 1,2,4 draw from levels at 2,4,8: each is upsampled by 2
      auto up = oracle::upsample(levels[j], 2);
      auto ref = oracle::conv(up, sge.align[j].weight, sge.align[j].bias, 1, 0, 1);
      CHECK(oracle::max_abs_diff(ref.v, feats[j].values()) < 1e-10);
    }
  }
}

TEST_CASE("sge eval mode is deterministic") {
  CounterRng rng(21);
  SGE<double> sge({}, rng);
  sge.forward(random_mask(2, 16, 16, 5));  // populate running stats
  sge.set_training(false);
  const auto mask = random_mask(1, 16, 16, 6);
  const auto a = sge.forward(mask);
  const auto b = sge.forward(mask);
  for (std::size_t j = 0; j < a.size(); ++j) {
    CHECK(std::equal(a[j].values().begin(), a[j].values().end(), b[j].values().begin()));
  }
}

TEST_CASE("sglk gamma=0 cancels the context branch exactly") {
  auto blk = random_sglk(4, 9, 31);
  blk.gamma.data()[0] = 0.0;
  CounterRng rng(32);
  const auto x = sald::testing::random_tensor({2, 4, 10, 10}, rng, -1, 1, false);
  const auto f = sald::testing::random_tensor({2, 4, 10, 10}, rng, -1, 1, false);
  SGLKTrace<double> tr;
  const auto out = blk.forward(x, f, &tr);
  const auto expect = nn::add(tr.detail, tr.res);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == expect.at(i));
}

TEST_CASE("sglk saturated gate closes the context branch") {
  auto blk = random_sglk(3, 5, 41);
  for (auto& v : blk.gate_proj.weight.data()) v = 0.0;
  for (int c = 0; c < 3; ++c) blk.gate_proj.weight.data()[c * 3 + c] = 1.0;
  for (auto& v : blk.gate_proj.bias.data()) v = 0.0;
  CounterRng rng(42);
  const auto x = sald::testing::random_tensor({1, 3, 8, 8}, rng, -2, 2, false);
  SGLKTrace<double> tr;
  const auto out = blk.forward(x, Td({1, 3, 8, 8}, -1000.0), &tr);
  const auto expect = nn::add(tr.detail, tr.res);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    CHECK(tr.gate.at(i) > 0.0);
    CHECK(std::abs(out.at(i) - expect.at(i)) < 1e-6);
  }
}

TEST_CASE("sglk gate bounds the context branch") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto blk = random_sglk(4, 9, 50 + seed);
    CounterRng rng(60 + seed);
    const auto x = sald::testing::random_tensor({2, 4, 12, 12}, rng, -3, 3, false);
    const auto f = sald::testing::random_tensor({2, 4, 12, 12}, rng, -8, 8, false);
    SGLKTrace<double> tr;
    blk.forward(x, f, &tr);
    for (std::size_t i = 0; i < tr.gate.numel(); ++i) {
      const double g = tr.gate.at(i);
      CHECK(g > 0.0);
      CHECK(g < 1.0);
      const double lg = std::abs(tr.large.at(i));
      const double gd = std::abs(tr.gated.at(i));
      CHECK(gd <= lg);
      if (lg > 0.0) CHECK(gd < lg);
    }
  }
}

TEST_CASE("sglk matches a straight-line composition") {
  for (std::uint64_t seed : {70u, 71u, 72u}) {
    auto blk = random_sglk(5, 9, seed);
    CounterRng rng(seed + 100);
    const auto x = sald::testing::random_tensor({2, 5, 11, 11}, rng, -1.5, 1.5, false);
    const auto f = sald::testing::random_tensor({2, 5, 11, 11}, rng, -1.5, 1.5, false);
    const auto out = blk.forward(x, f);

    const auto X = oracle::from(x);
    const auto F = oracle::from(f);
    const Td none;
    auto detail = oracle::map(
        oracle::bn_train(oracle::conv(X, blk.detail_conv.weight, none, 1, 0, 1), blk.detail_bn.gamma,
                         blk.detail_bn.beta),
        oracle::silu);
    auto large = oracle::map(
        oracle::bn_train(oracle::conv(X, blk.context_conv.weight, none, 1, 4, 5),
                         blk.context_bn.gamma, blk.context_bn.beta),
        oracle::silu);
    auto gate = oracle::map(oracle::conv(F, blk.gate_proj.weight, blk.gate_proj.bias, 1, 0, 1),
                            oracle::sigmoid);
    auto res = oracle::bn_train(oracle::conv(X, blk.res_conv.weight, none, 1, 0, 1), blk.res_bn.gamma,
                                blk.res_bn.beta);
    const double g = blk.gamma.item();
    std::vector<double> ref(detail.v.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref[i] = detail.v[i] + g * (large.v[i] * gate.v[i]) + res.v[i];
    }
    CHECK(oracle::max_abs_diff(ref, out.values()) < 1e-10);
  }
}

TEST_CASE("sglk output derivative in gamma is the gated branch") {
  auto blk = random_sglk(3, 5, 80);
  CounterRng rng(81);
  const auto x = sald::testing::random_tensor({1, 3, 7, 7}, rng, -1, 1, false);
  const auto f = sald::testing::random_tensor({1, 3, 7, 7}, rng, -1, 1, false);
  SGLKTrace<double> tr;
  const auto out = blk.forward(x, f, &tr);
  sald::testing::project(out, 99).backward();
  CounterRng rr(99);
  const auto r = sald::testing::random_tensor(out.shape(), rr, -1, 1, false);
  double direct = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) direct += tr.gated.at(i) * r.at(i);
  CHECK(blk.gamma.grad()[0] == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("sglk zero mask gives the constant half gate") {
  auto blk = random_sglk(4, 3, 90);
  for (auto& v : blk.gate_proj.bias.data()) v = 0.0;
  CounterRng rng(91);
  const auto x = sald::testing::random_tensor({1, 4, 6, 6}, rng, -1, 1, false);
  SGLKTrace<double> with_zero, mask_free;
  const auto a = blk.forward(x, Td({1, 4, 6, 6}, 0.0), &with_zero);
  const auto b = blk.forward(x, Td(), &mask_free);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(with_zero.gate.at(i) == 0.5);
    CHECK(mask_free.gate.at(i) == 0.5);
    CHECK(a.at(i) == b.at(i));
  }
}

TEST_CASE("sglk shape and config errors") {
  CounterRng rng(1);
  CHECK_THROWS_AS(SGLK<double>({4, 8, 1e-2}, rng), ConfigError);
  SGLK<double> blk({4, 3, 1e-2}, rng);
  CHECK_THROWS_AS(blk.forward(Td({1, 3, 6, 6}), Td()), DimensionError);
  CHECK_THROWS_AS(blk.forward(Td({1, 4, 6, 6}), Td({1, 4, 5, 6})), DimensionError);
  int names = 0;
  blk.visit("b", [&](const std::string&, Td&, bool) { ++names; });
  CHECK(names == 18);
}

TEST_CASE("sglk gradient check") {
  for (std::uint64_t seed : {200u, 201u}) {
    auto blk = random_sglk(2, 3, seed);
    CounterRng rng(seed + 1);
    auto x = sald::testing::random_tensor({2, 2, 5, 5}, rng);
    auto f = sald::testing::random_tensor({2, 2, 5, 5}, rng);
    std::vector<Td*> params{&x, &f};
    std::vector<std::string> names{"x", "f"};
    blk.visit("b", [&](const std::string& n, Td& t, bool trainable) {
      if (trainable) {
        params.push_back(&t);
        names.push_back(n);
      }
    });
    const auto r = sald::testing::grad_check(
        [&] { return sald::testing::project(blk.forward(x, f), seed); }, params, 1e-5, names);
    INFO(r.worst);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("sge gradient check") {
  CounterRng rng(300);
  SGE<double> sge({{2, 3}, {1, 2}, {2, 3}}, rng);
  auto mask = sald::testing::random_tensor({2, 1, 8, 8}, rng, 0, 1);
  std::vector<Td*> params{&mask};
  sge.visit("sge", [&](const std::string&, Td& t, bool trainable) {
    if (trainable) params.push_back(&t);
  });
  const auto r = sald::testing::grad_check(
      [&] {
        const auto feats = sge.forward(mask);
        return nn::add(sald::testing::project(feats[0], 1), sald::testing::project(feats[1], 2));
      },
      params);
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}
