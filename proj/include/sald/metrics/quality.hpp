// SPDX-License-Identifier: Apache-2.0
//
// Fidelity and structure metrics on [0,1] images, the bicubic baseline and
// the downstream detection proxy.
#pragma once

#include <optional>
#include <vector>

#include "sald/data/scene.hpp"
#include "sald/image.hpp"

namespace sald::metrics {

/// 10 log10(1 / MSE) over all channels; nullopt when the images are identical.
std::optional<double> psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
};

/// Mean local SSIM over valid window positions, averaged over channels.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

/// IoU of the binarized Sobel edge maps; 1 when both maps are empty.
double edge_iou(const Image& sr, const Image& hr, double threshold = 0.2);

/// Keys cubic convolution (a = -0.5), half-pixel centres, replicated borders,
/// result clamped to [0,1].
Image bicubic_upsample(const Image& lr, int factor);

struct DetectionScore {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

/// Precision/recall/F1 from counts. With no targets and no detections all
/// three are 1; with no detections otherwise precision is 0.
DetectionScore score_counts(int tp, int fp, int fn);

struct DetectOptions {
  double margin = data::SceneStyle{}.detect_margin;
  int min_area = 2, max_area = 25;
  double match_iou = 0.3;
};

/// Bounding boxes of 8-connected components of luminance >= median + margin
/// whose pixel area lies in [min_area, max_area].
std::vector<data::Box> detect_components(const Image& img, const DetectOptions& opt = {});

/// Greedy one-to-one matching of detections to targets by descending IoU.
DetectionScore detect_proxy(const Image& sr, const std::vector<data::Box>& targets,
                            const DetectOptions& opt = {});

}  // namespace sald::metrics
