// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace sald {

/// SplitMix64 finalizer. Bijective 64-bit mixing function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a parent seed and a stream tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

/// FNV-1a, used to turn string tags into stream ids.
constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Counter-based generator.
///
/// The n-th draw (n = 1, 2, ...) is mix64(seed + n * 0x9E3779B97F4A7C15), i.e.
/// the SplitMix64 sequence addressed by an explicit counter. The full state is
/// the pair (seed, counter), which makes it trivial to persist and to port:
///   uniform() = (draw >> 11) * 2^-53                      in [0, 1)
///   normal()  = Box-Muller on two uniforms u1, u2:
///               sqrt(-2 ln(1 - u1)) * cos(2 pi u2)         (no caching)
///   below(n)  = draw mod n (bias is negligible for the small n used here)
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr explicit CounterRng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  constexpr std::uint64_t next_u64() noexcept { return mix64(seed_ + (++counter_) * kGolden); }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  std::uint64_t below(std::uint64_t n) noexcept { return next_u64() % n; }

  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  friend constexpr bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace sald
