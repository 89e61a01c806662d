// SPDX-License-Identifier: Apache-2.0
//
// Naive loop implementations kept as permanent oracles for the fast paths.
#pragma once

#include <vector>

#include "sald/error.hpp"

namespace sald::nn::reference {

/// Direct 7-loop cross-correlation over NCHW buffers with zero padding.
/// weight: [cout, cin/groups, k, k]; bias may be empty.
template <typename T>
std::vector<T> conv2d(const std::vector<T>& x, int n, int cin, int h, int w,
                      const std::vector<T>& weight, int cout, int k, const std::vector<T>& bias,
                      int stride, int pad, int groups, int& ho, int& wo) {
  if (cin % groups || cout % groups) throw ConfigError("reference conv2d: bad groups");
  const int cin_g = cin / groups;
  const int cout_g = cout / groups;
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (w + 2 * pad - k) / stride + 1;
  std::vector<T> y(static_cast<std::size_t>(n) * cout * ho * wo, T(0));
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < cout; ++co) {
      const int g = co / cout_g;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const int c = g * cin_g + ci;
                acc += weight[((static_cast<std::size_t>(co) * cin_g + ci) * k + ky) * k + kx] *
                       x[((static_cast<std::size_t>(b) * cin + c) * h + iy) * w + ix];
              }
          y[((static_cast<std::size_t>(b) * cout + co) * ho + oy) * wo + ox] = acc;
        }
    }
  return y;
}

}  // namespace sald::nn::reference
