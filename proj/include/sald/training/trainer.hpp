// SPDX-License-Identifier: Apache-2.0
//
// Training loop: seeded shuffling, per-batch total_loss -> backward -> AdamW
// under a per-step cosine learning rate, CSV logs and per-epoch checkpoints.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "sald/nn/optim.hpp"
#include "sald/training/checkpoint.hpp"
#include "sald/training/loss.hpp"

namespace sald::training {

struct StepLog {
  long step = 0;
  int epoch = 0;
  double diff = 0, rec = 0, per = 0, total = 0, lr = 0;
};

struct EpochLog {
  int epoch = 0;
  double diff = 0, rec = 0, per = 0, total = 0, lr = 0;
};

template <typename T>
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<data::SceneSample> train_set);

  /// One pass over the training set; returns the epoch means.
  EpochLog run_epoch();
  /// Runs epochs until cfg.epochs, calling `on_epoch` after each.
  void fit(const std::function<void(const EpochLog&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  /// Restores parameters, BN statistics, optimizer moments, RNG state and logs.
  void restore(const Checkpoint& c);

  diffusion::SaldModel<T>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const diffusion::NoiseSchedule& schedule() const { return sched_; }
  int epoch() const { return epoch_; }
  long steps() const { return step_; }
  long total_steps() const;
  const std::vector<EpochLog>& epoch_logs() const { return epoch_logs_; }
  const std::vector<StepLog>& step_logs() const { return step_logs_; }

 private:
  void fit_codec();

  TrainConfig cfg_;
  std::vector<data::SceneSample> data_;
  std::vector<edge::Payload> payloads_;
  diffusion::NoiseSchedule sched_;
  diffusion::SaldModel<T> model_;
  PerceptualNet<T> phi_;
  nn::AdamW<T> opt_;
  CounterRng shuffle_rng_;
  int epoch_ = 0;
  long step_ = 0;
  std::vector<EpochLog> epoch_logs_;
  std::vector<StepLog> step_logs_;
};

/// Stores every model tensor (trainable or not) plus the model config.
template <typename T>
void store_model(Checkpoint& c, diffusion::SaldModel<T>& model);

/// Rebuilds a model from a checkpoint written by store_model.
template <typename T>
diffusion::SaldModel<T> load_model(const Checkpoint& c);

struct TrainOutputs {
  std::filesystem::path checkpoint, epoch_csv, step_csv;
};

TrainOutputs output_paths(const std::filesystem::path& dir);

/// Trains with CSV logs and a checkpoint rewritten after every epoch.
/// With `resume`, continues from an existing checkpoint in `dir`.
std::vector<EpochLog> train(const std::vector<data::SceneSample>& train_set, const TrainConfig& cfg,
                            const std::filesystem::path& dir, bool resume = false,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace sald::training
