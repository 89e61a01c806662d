// SPDX-License-Identifier: Apache-2.0
#include "sald/metrics/quality.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

#include "sald/edge/encoder.hpp"
#include "sald/error.hpp"

namespace sald::metrics {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": image shapes differ");
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of one plane.
std::vector<double> filter_valid(const double* x, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int ho = h - k + 1, wo = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * wo), out(static_cast<std::size_t>(ho) * wo);
  for (int y = 0; y < h; ++y)
    for (int xo = 0; xo < wo; ++xo) {
      double s = 0.0;
      for (int d = 0; d < k; ++d) s += g[d] * x[static_cast<std::size_t>(y) * w + xo + d];
      rows[static_cast<std::size_t>(y) * wo + xo] = s;
    }
  for (int yo = 0; yo < ho; ++yo)
    for (int xo = 0; xo < wo; ++xo) {
      double s = 0.0;
      for (int d = 0; d < k; ++d) s += g[d] * rows[static_cast<std::size_t>(yo + d) * wo + xo];
      out[static_cast<std::size_t>(yo) * wo + xo] = s;
    }
  return out;
}

double keys(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2.0) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0.0;
}

}  // namespace

std::optional<double> psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  if (se == 0.0) return std::nullopt;
  return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.data.size())));
}

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
  require_same(a, b, "ssim");
  if (a.height < opt.window || a.width < opt.window) {
    throw DimensionError("ssim: image smaller than the " + std::to_string(opt.window) + "px window");
  }
  const auto g = gaussian_window(opt.window, opt.sigma);
  const double c1 = opt.k1 * opt.k1, c2 = opt.k2 * opt.k2;
  const std::size_t plane = a.plane();
  std::vector<double> aa(plane), bb(plane), ab(plane);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const double* pa = a.data.data() + c * plane;
    const double* pb = b.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, a.height, a.width, g);
    const auto mu_b = filter_valid(pb, a.height, a.width, g);
    const auto e_aa = filter_valid(aa.data(), a.height, a.width, g);
    const auto e_bb = filter_valid(bb.data(), a.height, a.width, g);
    const auto e_ab = filter_valid(ab.data(), a.height, a.width, g);
    double s = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma2 = mu_a[i] * mu_a[i], mb2 = mu_b[i] * mu_b[i], mab = mu_a[i] * mu_b[i];
      const double va = e_aa[i] - ma2, vb = e_bb[i] - mb2, cov = e_ab[i] - mab;
      s += ((2 * mab + c1) * (2 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
    }
    total += s / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

double edge_iou(const Image& sr, const Image& hr, double threshold) {
  require_same(sr, hr, "edge_iou");
  const auto ea = edge::edge_map(sr, threshold);
  const auto eb = edge::edge_map(hr, threshold);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ea.data.size(); ++i) {
    inter += ea.data[i] & eb.data[i];
    uni += ea.data[i] | eb.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Image bicubic_upsample(const Image& lr, int factor) {
  if (factor < 1) throw ConfigError("upsampling factor must be positive");
  const int ho = lr.height * factor, wo = lr.width * factor;
  // Taps and weights are the same for every row (column) of the output.
  auto taps = [factor](int o, int n, std::array<int, 4>& idx, std::array<double, 4>& wt) {
    const double src = (o + 0.5) / factor - 0.5;
    const int base = static_cast<int>(std::floor(src));
    for (int k = 0; k < 4; ++k) {
      const int i = base - 1 + k;
      idx[k] = std::clamp(i, 0, n - 1);
      wt[k] = keys(src - i);
    }
  };
  std::vector<std::array<int, 4>> yi(ho), xi(wo);
  std::vector<std::array<double, 4>> yw(ho), xw(wo);
  for (int y = 0; y < ho; ++y) taps(y, lr.height, yi[y], yw[y]);
  for (int x = 0; x < wo; ++x) taps(x, lr.width, xi[x], xw[x]);

  Image out(lr.channels, ho, wo);
  for (int c = 0; c < lr.channels; ++c)
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) {
          double r = 0.0;
          for (int j = 0; j < 4; ++j) r += xw[x][j] * lr.at(c, yi[y][i], xi[x][j]);
          s += yw[y][i] * r;
        }
        out.at(c, y, x) = std::clamp(s, 0.0, 1.0);
      }
  return out;
}

DetectionScore score_counts(int tp, int fp, int fn) {
  DetectionScore d{tp, fp, fn, 0, 0, 0};
  const int detections = tp + fp, targets = tp + fn;
  if (detections == 0 && targets == 0) {
    d.precision = d.recall = d.f1 = 1.0;
    return d;
  }
  d.precision = detections == 0 ? 0.0 : static_cast<double>(tp) / detections;
  d.recall = targets == 0 ? 1.0 : static_cast<double>(tp) / targets;
  d.f1 = d.precision + d.recall > 0 ? 2 * d.precision * d.recall / (d.precision + d.recall) : 0.0;
  return d;
}

std::vector<data::Box> detect_components(const Image& img, const DetectOptions& opt) {
  const auto lum = luminance(img);
  const int h = img.height, w = img.width;
  auto sorted = lum;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double level = sorted[sorted.size() / 2] + opt.margin;

  std::vector<std::uint8_t> seen(lum.size(), 0);
  std::vector<data::Box> boxes;
  std::vector<int> stack;
  for (int y0 = 0; y0 < h; ++y0)
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t start = static_cast<std::size_t>(y0) * w + x0;
      if (seen[start] || lum[start] < level) continue;
      int area = 0, ymin = y0, ymax = y0, xmin = x0, xmax = x0;
      stack.assign(1, static_cast<int>(start));
      seen[start] = 1;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int y = p / w, x = p % w;
        ++area;
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
            if (!seen[q] && lum[q] >= level) {
              seen[q] = 1;
              stack.push_back(static_cast<int>(q));
            }
          }
      }
      if (area >= opt.min_area && area <= opt.max_area) {
        boxes.push_back({xmin, ymin, xmax - xmin + 1, ymax - ymin + 1});
      }
    }
  return boxes;
}

DetectionScore detect_proxy(const Image& sr, const std::vector<data::Box>& targets, const DetectOptions& opt) {
  const auto found = detect_components(sr, opt);
  std::vector<std::tuple<double, int, int>> pairs;
  for (int i = 0; i < static_cast<int>(found.size()); ++i)
    for (int j = 0; j < static_cast<int>(targets.size()); ++j) {
      const double iou = data::box_iou(found[i], targets[j]);
      if (iou >= opt.match_iou) pairs.emplace_back(iou, i, j);
    }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::vector<std::uint8_t> used_f(found.size(), 0), used_t(targets.size(), 0);
  int tp = 0;
  for (const auto& [iou, i, j] : pairs) {
    if (used_f[i] || used_t[j]) continue;
    used_f[i] = used_t[j] = 1;
    ++tp;
  }
  return score_counts(tp, static_cast<int>(found.size()) - tp, static_cast<int>(targets.size()) - tp);
}

}  // namespace sald::metrics
