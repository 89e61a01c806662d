// SPDX-License-Identifier: Apache-2.0
//
// Effective configuration of a command: built-in defaults, overridden by a
// JSON file, overridden by command-line flags.
#pragma once

#include <filesystem>

#include <json.hpp>

#include "sald/channel/channel.hpp"
#include "sald/metrics/classifier.hpp"
#include "sald/training/loss.hpp"

namespace sald::cli {

struct DataConfig {
  std::uint64_t seed = 2024;
  int train = 64;
  int test = 32;
  int size = 64;
};

struct SamplerConfig {
  int timesteps = 50;
  std::uint64_t seed = 7;
  bool use_mask = true;
  bool clip_x0 = true;
};

struct ClassifierSetup {
  metrics::ClassifierConfig fit;
  /// Size of the HR split the classifier is fitted on, drawn from its own seed.
  int scenes = 256;
};

/// Desk-scale recipe: 120 epochs of batch 4 at lr 1e-3, otherwise the
/// training defaults (k=9, s=4, q=5, T=50).
training::TrainConfig desk_train_config();

struct RunConfig {
  DataConfig data;
  training::TrainConfig train = desk_train_config();
  channel::ChannelConfig channel;
  SamplerConfig sampler;
  ClassifierSetup classifier;
  int triptychs = 4;
  int threads = 1;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their current values in `base`; unknown keys raise ConfigError.
RunConfig merge_run_config(RunConfig base, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void validate(const RunConfig& c);

/// Writes `resolved.json` into `dir`.
void write_resolved(const std::filesystem::path& dir, const RunConfig& c);

}  // namespace sald::cli
