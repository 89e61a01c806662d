// SPDX-License-Identifier: Apache-2.0
#include "sald/edge/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "sald/error.hpp"

namespace sald::edge {

std::string to_string(MaskSource m) {
  switch (m) {
    case MaskSource::oracle: return "oracle";
    case MaskSource::saliency: return "saliency";
    case MaskSource::none: return "none";
  }
  return "?";
}

MaskSource parse_mask_source(const std::string& s) {
  if (s == "oracle") return MaskSource::oracle;
  if (s == "saliency") return MaskSource::saliency;
  if (s == "none") return MaskSource::none;
  throw ConfigError("unknown mask source '" + s + "' (oracle|saliency|none)");
}

std::uint16_t quantize(double v, int q) {
  const double levels = static_cast<double>((1 << q) - 1);
  const double k = std::floor(std::clamp(v, 0.0, 1.0) * levels + 0.5);
  return static_cast<std::uint16_t>(std::min(k, levels));
}

double dequantize(std::uint16_t level, int q) {
  return static_cast<double>(level) / static_cast<double>((1 << q) - 1);
}

std::vector<double> sobel_magnitude(const Image& img) {
  const auto y = luminance(img);
  const int h = img.height, w = img.width;
  auto at = [&](int r, int c) {
    return y[static_cast<std::size_t>(std::clamp(r, 0, h - 1)) * w + std::clamp(c, 0, w - 1)];
  };
  std::vector<double> mag(y.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      mag[static_cast<std::size_t>(r) * w + c] = std::sqrt(gx * gx + gy * gy);
    }
  return mag;
}

Mask edge_map(const Image& img, double threshold) {
  const auto mag = sobel_magnitude(img);
  Mask m(img.height, img.width);
  const double peak = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
  // Anything below this is round-off on a flat image, not an edge.
  if (peak <= 1e-12) return m;
  for (std::size_t i = 0; i < mag.size(); ++i) m.data[i] = mag[i] / peak >= threshold ? 1 : 0;
  return m;
}

Mask dilate(const Mask& m, int radius) {
  if (radius < 0) throw ConfigError("dilation radius must be >= 0");
  if (radius == 0) return m;
  // Separable: horizontal then vertical max filter.
  Mask tmp(m.height, m.width), out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      std::uint8_t v = 0;
      for (int d = std::max(0, x - radius); d <= std::min(m.width - 1, x + radius) && !v; ++d) v = m.at(y, d);
      tmp.at(y, x) = v;
    }
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      std::uint8_t v = 0;
      for (int d = std::max(0, y - radius); d <= std::min(m.height - 1, y + radius) && !v; ++d) v = tmp.at(d, x);
      out.at(y, x) = v;
    }
  return out;
}

Mask extract_mask(const Image& hr, double threshold, int dilation) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("saliency threshold must be in (0,1)");
  if (dilation < 0) throw ConfigError("dilation must be >= 0");
  return dilate(edge_map(hr, threshold), dilation);
}

Payload encode_image(const Image& hr, const Mask* gt_mask, const EncodeOptions& opts) {
  if (opts.s != 2 && opts.s != 4 && opts.s != 8) throw ConfigError("s must be 2, 4 or 8");
  if (opts.q < 2 || opts.q > 8) throw ConfigError("q must be in 2..8");
  if (hr.channels != 3) throw DimensionError("encoder expects an RGB image");
  if (hr.height % opts.s || hr.width % opts.s) {
    throw DimensionError("image size not divisible by s=" + std::to_string(opts.s));
  }
  Payload p;
  p.height = hr.height;
  p.width = hr.width;
  p.s = opts.s;
  p.q = opts.q;

  // Block means, identical to resample(down).
  const int lh = hr.height / opts.s, lw = hr.width / opts.s;
  const double inv = 1.0 / (opts.s * opts.s);
  p.lr.resize(3u * lh * lw);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < lh; ++y)
      for (int x = 0; x < lw; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < opts.s; ++dy)
          for (int dx = 0; dx < opts.s; ++dx) acc += hr.at(c, y * opts.s + dy, x * opts.s + dx);
        p.lr[(static_cast<std::size_t>(c) * lh + y) * lw + x] = quantize(acc * inv, opts.q);
      }

  switch (opts.mask_source) {
    case MaskSource::oracle:
      if (!gt_mask) throw ConfigError("oracle mask source needs a ground-truth mask");
      if (gt_mask->height != hr.height || gt_mask->width != hr.width) {
        throw DimensionError("ground-truth mask shape does not match the image");
      }
      p.mask = *gt_mask;
      p.mask_mode = MaskMode::oracle;
      break;
    case MaskSource::saliency:
      p.mask = extract_mask(hr, opts.saliency_threshold, opts.saliency_dilation);
      p.mask_mode = MaskMode::saliency;
      break;
    case MaskSource::none:
      p.mask = Mask(hr.height, hr.width);
      p.mask_mode = MaskMode::none;
      break;
  }

  const std::size_t r = payload_bytes(p);
  if (r > opts.budget) throw BudgetExceeded(r, opts.budget);
  return p;
}

Payload encode(const data::SceneSample& sample, const EncodeOptions& opts) {
  return encode_image(sample.hr, &sample.gt_mask, opts);
}

Image dequantize_lr(const Payload& p) {
  if (p.s <= 0 || p.q <= 0 || p.height % p.s || p.width % p.s) throw FormatError("invalid payload header");
  const int lh = p.lr_height(), lw = p.lr_width();
  if (p.lr.size() != 3u * lh * lw) throw FormatError("payload sample count mismatch");
  Image img(3, lh, lw);
  for (std::size_t i = 0; i < p.lr.size(); ++i) img.data[i] = dequantize(p.lr[i], p.q);
  return img;
}

}  // namespace sald::edge
