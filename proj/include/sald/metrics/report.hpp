// SPDX-License-Identifier: Apache-2.0
//
// Per-sample evaluation rows, their aggregate and CSV / text / PPM export.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sald/metrics/classifier.hpp"
#include "sald/metrics/quality.hpp"

namespace sald::metrics {

/// Stand-in cap used when averaging PSNR over identical pairs.
inline constexpr double kIdenticalPsnrDb = 100.0;

struct EvalRow {
  std::string method;
  std::uint64_t seed = 0;
  data::SceneClass scene_class = data::SceneClass::vehicles_sparse;
  std::optional<double> psnr;  // nullopt: identical to the reference
  double ssim = 0, edge_iou = 0, bpp = 0;
  DetectionScore detection;
  int predicted = -1;  // -1 when no classifier was supplied
  bool correct = false;
};

struct EvalSummary {
  std::string method;
  int samples = 0;
  double psnr = 0, ssim = 0, edge_iou = 0, bpp = 0;
  /// Micro-averaged over all targets and detections.
  DetectionScore detection;
  std::optional<double> top1;
};

/// Scores one reconstruction against its scene.
EvalRow measure(const std::string& method, const Image& sr, const data::SceneSample& scene, double bpp,
                SceneClassifier* clf = nullptr);

EvalSummary summarize(const std::vector<EvalRow>& rows);

std::string psnr_field(const std::optional<double>& psnr);

/// Header comment, then one row per sample.
void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows);
std::string summary_text(const std::vector<EvalSummary>& summaries);

/// HR | bicubic | reconstruction, side by side.
void write_triptych(const std::filesystem::path& path, const Image& hr, const Image& bicubic, const Image& sr);

}  // namespace sald::metrics
