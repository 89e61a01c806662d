// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support/op_catalog.hpp"
#include "sald/error.hpp"
#include "sald/nn/layers.hpp"
#include "sald/nn/reference.hpp"

using namespace sald;
using namespace sald::nn;
using sald::testing::random_tensor;
using Td = Tensor<double>;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Td conv_ref(const Td& x, const Td& w, const Td& b, Conv2dOptions o) {
  int ho = 0, wo = 0;
  std::vector<double> bias;
  if (b.defined()) bias.assign(b.values().begin(), b.values().end());
  auto y = reference::conv2d(std::vector<double>(x.values().begin(), x.values().end()), x.dim(0),
                             x.dim(1), x.dim(2), x.dim(3),
                             std::vector<double>(w.values().begin(), w.values().end()), w.dim(0),
                             w.dim(2), bias, o.stride, o.padding, o.groups, ho, wo);
  return Td({x.dim(0), w.dim(0), ho, wo}, std::move(y));
}

}  // namespace

TEST_CASE("conv2d counts overlapped ones") {
  Td x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, w, Td(), {1, 1, 1});
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at(4) == 9.0);
  CHECK(y.at(0) == 4.0);
  CHECK(y.at(1) == 6.0);
}

TEST_CASE("conv2d identity kernel") {
  CounterRng rng(3);
  auto x = random_tensor({2, 3, 5, 6}, rng, -1, 1, false);
  Td w({3, 1, 3, 3}, 0.0);
  for (int c = 0; c < 3; ++c) w.data()[c * 9 + 4] = 1.0;
  auto y = conv2d(x, w, Td(), {1, 1, 3});
  CHECK(max_abs_diff(y.values(), x.values()) == 0.0);
}

TEST_CASE("conv2d depthwise k=9 matches the naive loop") {
  CounterRng rng(11);
  auto x = random_tensor({2, 4, 8, 8}, rng, -1, 1, false);
  auto w = random_tensor({4, 1, 9, 9}, rng, -1, 1, false);
  auto b = random_tensor({4}, rng, -1, 1, false);
  Conv2dOptions o{1, 4, 4};
  CHECK(max_abs_diff(conv2d(x, w, b, o).values(), conv_ref(x, w, b, o).values()) < 1e-10);
}

TEST_CASE("conv2d general configurations match the naive loop") {
  struct Cfg {
    int cin, cout, k, stride, pad, groups, h, w;
  };
  const Cfg cfgs[] = {{3, 5, 3, 1, 1, 1, 9, 7}, {4, 6, 3, 2, 1, 2, 8, 8}, {2, 3, 1, 1, 0, 1, 5, 5},
                      {3, 4, 5, 2, 2, 1, 11, 6}, {6, 6, 7, 1, 3, 6, 5, 9}, {2, 4, 3, 1, 0, 2, 6, 6}};
  std::uint64_t seed = 100;
  for (const auto& c : cfgs) {
    CounterRng rng(seed++);
    auto x = random_tensor({2, c.cin, c.h, c.w}, rng, -1, 1, false);
    auto w = random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, rng, -1, 1, false);
    auto b = random_tensor({c.cout}, rng, -1, 1, false);
    Conv2dOptions o{c.stride, c.pad, c.groups};
    auto y = conv2d(x, w, b, o);
    auto r = conv_ref(x, w, b, o);
    CHECK(y.shape() == r.shape());
    CHECK(max_abs_diff(y.values(), r.values()) < 1e-10);
  }
}

TEST_CASE("conv2d float path agrees with double") {
  CounterRng rng(5);
  auto x = random_tensor({1, 4, 8, 8}, rng, -1, 1, false);
  auto w = random_tensor({4, 1, 9, 9}, rng, -1, 1, false);
  auto yd = conv2d(x, w, Td(), {1, 4, 4});
  auto yf = conv2d(cast<float>(x), cast<float>(w), Tensor<float>(), {1, 4, 4});
  for (std::size_t i = 0; i < yd.numel(); ++i) CHECK(std::abs(yd.at(i) - yf.at(i)) < 1e-4);
}

TEST_CASE("conv2d errors") {
  Td x({1, 4, 5, 5}, 0.0);
  CHECK_THROWS_AS(conv2d(x, Td({4, 2, 3, 3}, 0.0), Td(), {1, 1, 3}), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Td({4, 3, 3, 3}, 0.0), Td(), {1, 1, 1}), DimensionError);
  CHECK_THROWS_AS(conv2d(x, Td({4, 4, 2, 2}, 0.0), Td(), {}), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Td({2, 4, 3, 3}, 0.0), Td({3}, 0.0), {}), DimensionError);
}

TEST_CASE("conv2d is linear in its input") {
  CounterRng rng(21);
  auto x = random_tensor({1, 3, 6, 6}, rng, -1, 1, false);
  auto y = random_tensor({1, 3, 6, 6}, rng, -1, 1, false);
  auto w = random_tensor({2, 3, 3, 3}, rng, -1, 1, false);
  const double a = 0.7, b = -1.3;
  auto lhs = conv2d(add(affine(x, a, 0.0), affine(y, b, 0.0)), w, Td(), {1, 1, 1});
  auto rhs = add(affine(conv2d(x, w, Td(), {1, 1, 1}), a, 0.0),
                 affine(conv2d(y, w, Td(), {1, 1, 1}), b, 0.0));
  CHECK(max_abs_diff(lhs.values(), rhs.values()) < 1e-9);
}

TEST_CASE("conv2d interior translation equivariance") {
  CounterRng rng(22);
  const int h = 10, w = 10;
  auto x = random_tensor({1, 2, h, w}, rng, -1, 1, false);
  Td xs({1, 2, h, w}, 0.0);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 1; j < w; ++j)
        xs.data()[(c * h + i) * w + j] = x.at((c * h + i) * w + j - 1);
  auto k = random_tensor({3, 2, 3, 3}, rng, -1, 1, false);
  auto y = conv2d(x, k, Td(), {1, 1, 1});
  auto ys = conv2d(xs, k, Td(), {1, 1, 1});
  for (int c = 0; c < 3; ++c)
    for (int i = 1; i < h - 1; ++i)
      for (int j = 2; j < w - 1; ++j)
        CHECK(ys.at((c * h + i) * w + j) == y.at((c * h + i) * w + j - 1));
}

TEST_CASE("batchnorm2d") {
  SUBCASE("standardized input passes through") {
    // Each channel holds {-1, 1} repeated: mean 0, biased variance 1.
    Td x({2, 2, 1, 2}, std::vector<double>{-1, 1, 1, -1, 1, -1, -1, 1});
    Td g({2}, 1.0, true), b({2}, 0.0, true), rm({2}, 0.0), rv({2}, 1.0);
    auto y = batchnorm2d(x, g, b, rm, rv, {});
    CHECK(max_abs_diff(y.values(), x.values()) < 1e-5);
  }
  SUBCASE("gamma zero gives beta") {
    CounterRng rng(4);
    auto x = random_tensor({3, 2, 2, 2}, rng);
    Td g({2}, 0.0), b({2}, std::vector<double>{0.25, -3.0}), rm({2}, 0.0), rv({2}, 1.0);
    auto y = batchnorm2d(x, g, b, rm, rv, {});
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == b.at((i / 4) % 2));
  }
  SUBCASE("train mode statistics") {
    CounterRng rng(5);
    auto x = random_tensor({4, 3, 5, 5}, rng, -3, 7);
    Td g({3}, 1.0), b({3}, 0.0), rm({3}, 0.0), rv({3}, 1.0);
    auto y = batchnorm2d(x, g, b, rm, rv, {});
    for (int c = 0; c < 3; ++c) {
      double s = 0, ss = 0;
      for (int n = 0; n < 4; ++n)
        for (int j = 0; j < 25; ++j) s += y.at((n * 3 + c) * 25 + j);
      const double m = s / 100;
      for (int n = 0; n < 4; ++n)
        for (int j = 0; j < 25; ++j) ss += std::pow(y.at((n * 3 + c) * 25 + j) - m, 2);
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(ss / 100 - 1.0) < 1e-4);
    }
  }
  SUBCASE("running statistics use momentum 0.1 and the unbiased variance") {
    Td x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 6});
    Td g({1}, 1.0), b({1}, 0.0), rm({1}, 0.0), rv({1}, 1.0);
    batchnorm2d(x, g, b, rm, rv, {});
    CHECK(rm.at(0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(rv.at(0) == doctest::Approx(0.9 + 0.1 * (14.0 / 3.0)).epsilon(1e-12));
    BatchNormOptions eval;
    eval.training = false;
    auto y = batchnorm2d(x, g, b, rm, rv, eval);
    CHECK(y.at(0) == doctest::Approx((1 - rm.at(0)) / std::sqrt(rv.at(0) + 1e-5)));
  }
  SUBCASE("eps must be positive") {
    Td x({2, 1, 1, 1}, 0.0), g({1}, 1.0), b({1}, 0.0), rm({1}, 0.0), rv({1}, 1.0);
    BatchNormOptions o;
    o.eps = 0.0;
    CHECK_THROWS_AS(batchnorm2d(x, g, b, rm, rv, o), ConfigError);
  }
}

TEST_CASE("activations") {
  Td z({1}, 0.0), m({1}, -1.0);
  CHECK(sigmoid(z).item() == 0.5);
  CHECK(silu(z).item() == 0.0);
  CHECK(relu(m).item() == 0.0);

  Td one({1}, 1.0, true);
  silu(one).backward();
  const double h = 1e-5;
  auto f = [](double x) { return x / (1 + std::exp(-x)); };
  CHECK(std::abs(one.grad()[0] - (f(1 + h) - f(1 - h)) / (2 * h)) < 1e-6);

  CounterRng rng(8);
  auto x = random_tensor({200}, rng, -40, 40, false);
  const auto s = sigmoid(x);
  const auto r = relu(x);
  for (double v : s.values()) CHECK((v > 0.0 && v < 1.0));
  for (double v : r.values()) CHECK(v >= 0.0);
  const auto sf = sigmoid(Tensor<float>({2}, std::vector<float>{-200.f, 200.f}));
  CHECK(sf.at(0) > 0.0f);
  CHECK(sf.at(1) < 1.0f);
}

TEST_CASE("resample") {
  SUBCASE("constant stays constant") {
    Td c({1, 2, 8, 8}, 0.37);
    for (int f : {1, 2, 4})
      for (auto d : {Direction::down, Direction::up}) {
        const auto y = resample(c, f, d);
        for (double v : y.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
      }
  }
  SUBCASE("block mean") {
    Td x({1, 1, 2, 2}, std::vector<double>{0, 0, 4, 4});
    CHECK(resample(x, 2, Direction::down).item() == 2.0);
  }
  SUBCASE("indivisible") {
    CHECK_THROWS_AS(resample(Td({1, 1, 5, 4}, 0.0), 2, Direction::down), DimensionError);
  }
  SUBCASE("up of down on a ramp") {
    // Horizontal ramp with unit step. Interior error is zero; the clamped
    // border pixels are off by exactly half a step.
    const int n = 16;
    Td x({1, 1, n, n}, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) x.data()[i * n + j] = static_cast<double>(j);
    auto y = resample(resample(x, 2, Direction::down), 2, Direction::up);
    double err = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 1; j < n - 1; ++j) err = std::max(err, std::abs(y.at(i * n + j) - j));
    CHECK(err < 1e-12);
    CHECK(max_abs_diff(y.values(), x.values()) <= 0.5);
  }
}

TEST_CASE("elementwise and structural ops") {
  CounterRng rng(9);
  auto x = random_tensor({2, 3, 4}, rng, -1, 1, false);
  CHECK(max_abs_diff(mul(x, Td({2, 3, 4}, 1.0)).values(), x.values()) == 0.0);
  const auto zeroed = scale(x, Td({1}, 0.0));
  for (double v : zeroed.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(add(x, Td({2, 3, 5}, 0.0)), DimensionError);
  CHECK_THROWS_AS(mul(x, Td({3, 2, 4}, 0.0)), DimensionError);

  auto a = random_tensor({2, 1, 4}, rng, -1, 1, false);
  auto b = random_tensor({2, 3, 4}, rng, -1, 1, false);
  for (int axis : {1, -2}) {
    auto parts = split(concat<double>({a, b}, axis), axis, {1, 3});
    CHECK(parts[0].shape() == a.shape());
    CHECK(max_abs_diff(parts[0].values(), a.values()) == 0.0);
    CHECK(max_abs_diff(parts[1].values(), b.values()) == 0.0);
  }
  CHECK_THROWS_AS(concat<double>({a, Td({2, 1, 5}, 0.0)}, 1), DimensionError);
}

TEST_CASE("backward") {
  CounterRng rng(10);
  auto x = random_tensor({3, 4}, rng);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  sum(mul(x, x)).backward();
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 2.0 * x.at(i));

  // A second call without reset accumulates.
  sum(mul(x, x)).backward();
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 4.0 * x.at(i));

  CHECK_THROWS_AS(sum(x.detach()).backward(), GraphError);
  CHECK_THROWS_AS(mul(x, x).backward(), GraphError);
  {
    NoGradGuard ng;
    CHECK_THROWS_AS(sum(x).backward(), GraphError);
  }
}

TEST_CASE("backward visits each node once") {
  CounterRng rng(12);
  auto x = random_tensor({1, 2, 4, 4}, rng);
  auto w = random_tensor({2, 2, 3, 3}, rng);
  // Diamond: both branches read `h`.
  auto h = conv2d(x, w, Td(), {1, 1, 1});
  auto a = relu(h);
  auto b = sigmoid(h);
  auto loss = sum(add(mul(a, b), h));
  const auto order = topological_order(loss.node());
  const std::size_t visited = loss.backward();
  CHECK(visited == order.size());
  for (auto* n : order) CHECK(n->visits == 1);
  CHECK(h.node()->visits == 1);
  CHECK(x.node()->visits == 1);
}

TEST_CASE("finite checks raise on non-finite values") {
  set_finite_checks(true);
  Td x({1}, 1000.0);
  CHECK_THROWS_AS(affine(x, 1e308, 0.0), NumericError);
  set_finite_checks(false);
  CHECK_NOTHROW(affine(x, 1e308, 0.0));
}

TEST_CASE("every op passes a gradient check") {
  for (const auto& c : sald::testing::op_catalog()) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto r = c.run(seed * 7919);
      INFO(c.name, " seed ", seed, " worst ", r.worst);
      CHECK(r.max_rel < 1e-4);
      CHECK(r.checked > 0);
    }
  }
}

TEST_CASE("layers") {
  CounterRng rng(1);
  auto conv = Conv2d<double>::same(3, 8, 5, rng);
  CHECK(conv.weight.shape() == Shape{8, 3, 5, 5});
  const double bound = 1.0 / std::sqrt(75.0);
  for (double v : conv.weight.values()) CHECK(std::abs(v) <= bound);
  auto y = conv(Td({1, 3, 6, 6}, 0.0));
  CHECK(y.shape() == Shape{1, 8, 6, 6});
  std::size_t n = 0;
  BatchNorm2d<double> bn(8);
  bn.visit("bn", [&](const std::string& name, Td&, bool trainable) {
    n += trainable;
    CHECK(name.rfind("bn.", 0) == 0);
  });
  CHECK(n == 2);
}
