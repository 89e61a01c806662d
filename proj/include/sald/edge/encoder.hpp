// SPDX-License-Identifier: Apache-2.0
//
// Edge-side encoder: splits an HR image into a quantized low-resolution
// stream and a binary structural mask, under a byte budget.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sald/data/scene.hpp"
#include "sald/edge/payload.hpp"

namespace sald::edge {

enum class MaskSource { oracle, saliency, none };

std::string to_string(MaskSource m);
MaskSource parse_mask_source(const std::string& s);

struct EncodeOptions {
  int s = 4;
  int q = 5;
  MaskSource mask_source = MaskSource::oracle;
  double saliency_threshold = 0.2;
  int saliency_dilation = 1;
  std::size_t budget = 150000;
};

/// Quantization level of v in [0,1]: floor(v (2^q - 1) + 1/2), clamped.
std::uint16_t quantize(double v, int q);
double dequantize(std::uint16_t level, int q);

/// Sobel gradient magnitude of the luminance, replicate borders.
std::vector<double> sobel_magnitude(const Image& img);

/// Sobel magnitude divided by its image maximum and binarized at
/// `threshold` (magnitude >= threshold). A flat image yields no edges.
Mask edge_map(const Image& img, double threshold);

/// Square dilation with a (2r+1) x (2r+1) structuring element.
Mask dilate(const Mask& m, int radius);

/// Classical saliency stand-in: edge_map followed by dilation.
Mask extract_mask(const Image& hr, double threshold, int dilation);

/// Encodes an image. `gt_mask` is required for MaskSource::oracle.
/// Throws BudgetExceeded if the serialized size exceeds opts.budget.
Payload encode_image(const Image& hr, const Mask* gt_mask, const EncodeOptions& opts);
Payload encode(const data::SceneSample& sample, const EncodeOptions& opts);

/// [3, H/s, W/s] image of dequantized samples.
Image dequantize_lr(const Payload& p);

}  // namespace sald::edge
