// SPDX-License-Identifier: Apache-2.0
//
// End-to-end evaluation (encode -> transmit -> reconstruct -> score) and the
// ablation sweeps behind the command-line tool.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sald/cli/run_config.hpp"
#include "sald/diffusion/sampler.hpp"
#include "sald/metrics/report.hpp"

namespace sald::cli {

struct EvalSetting {
  int timesteps = 50;
  double mask_missing_rate = 0.0;
  /// Replace every transmitted mask with an all-zero mask.
  bool zero_mask = false;
};

struct EvalRun {
  std::vector<metrics::EvalRow> rows;
  std::vector<Image> images;
  double seconds = 0.0;  // wall time of reconstruction only
};

std::vector<edge::Payload> encode_all(const std::vector<data::SceneSample>& scenes, const edge::EncodeOptions& opts);

/// Channel pass per scene; each scene's drop pattern is seeded from the
/// channel seed and the scene seed.
std::vector<edge::Payload> transmit_all(const std::vector<edge::Payload>& payloads,
                                        const std::vector<data::SceneSample>& scenes,
                                        const channel::ChannelConfig& cfg, bool zero_mask = false);

EvalRun evaluate_sald(diffusion::SaldModel<float>& model, const std::vector<data::SceneSample>& test,
                      const RunConfig& cfg, const EvalSetting& setting, metrics::SceneClassifier* clf = nullptr,
                      const std::string& method = "sald");

EvalRun evaluate_bicubic(const std::vector<data::SceneSample>& test, const RunConfig& cfg,
                         metrics::SceneClassifier* clf = nullptr);

/// Fits the classification proxy on its own HR split.
metrics::SceneClassifier fit_proxy_classifier(const RunConfig& cfg);

/// Model grid rows: baseline (neither module), sglk, sge, full.
diffusion::ModelConfig module_variant(diffusion::ModelConfig base, const std::string& name);

enum class Sweep { modules, timesteps, kernel, lambda2, mask_missing };
Sweep parse_sweep(const std::string& s);
std::string to_string(Sweep s);

struct SweepRow {
  std::string setting;
  metrics::EvalSummary summary;
  std::vector<metrics::EvalRow> rows;
  long params = 0;
  double seconds = 0.0;
  double relative_latency = 0.0;  // timesteps sweep: wall time / wall time at T=50
};

struct SweepInputs {
  /// Trained checkpoint for sweeps over a fixed model (timesteps, mask-missing).
  std::filesystem::path checkpoint;
  /// Root for per-setting training runs of architecture / loss sweeps.
  std::filesystem::path work_dir;
  metrics::SceneClassifier* classifier = nullptr;
  std::function<void(const std::string&)> log;
};

std::vector<SweepRow> run_sweep(Sweep sweep, const RunConfig& cfg, const SweepInputs& in);

void write_sweep_csv(const std::filesystem::path& path, Sweep sweep, const std::vector<SweepRow>& rows);

/// Loads a model checkpoint, raising ConfigError when the file is missing.
diffusion::SaldModel<float> load_trained(const std::filesystem::path& checkpoint);

}  // namespace sald::cli
