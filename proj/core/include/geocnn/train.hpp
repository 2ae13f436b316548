// Copyright 2026 The geocnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geocnn/checkpoint.hpp"
#include "geocnn/model.hpp"
#include "geocnn/pointcloud.hpp"
#include "geocnn/tensor.hpp"

namespace geocnn {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  AdamConfig adam;
  double lr_decay = 0.7;
  std::size_t lr_decay_every = 20;
  std::uint64_t seed = 0;
  /// Write epoch_<N>.gck into checkpoint_dir every this many epochs; 0 disables.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  /// Random z rotation of every training cloud, redrawn each epoch.
  bool rotate_augment = false;

  void validate() const;  // ConfigError
  /// Learning rate used during a 1-based epoch.
  double learning_rate_at(std::size_t epoch) const;
  bool set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

struct MetricsReport {
  std::size_t epoch = 0;
  double loss = 0.0;
  double acc_overall = 0.0;
  /// Unweighted mean of per-class recall over the classes present.
  double acc_class = 0.0;
  /// Recall per class; NaN for a class with no samples.
  std::vector<double> class_acc;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  double seconds = 0.0;
};

MetricsReport compute_metrics(std::span<const std::size_t> labels,
                              std::span<const std::size_t> predictions, std::size_t num_classes);

/// Samples each cloud to `n_points` (seeded by its content hash, so the
/// result does not depend on dataset order) and normalizes it to the unit
/// sphere. Labels are kept.
std::vector<PointCloud> prepare_dataset(const std::vector<PointCloud>& clouds,
                                        std::size_t n_points, std::uint64_t seed);

/// Eval-mode metrics. Loss is the mean cross-entropy. Throws ArgumentError on
/// an empty set or a cloud without a valid label.
MetricsReport evaluate(const Model<float>& model, const std::vector<PointCloud>& clouds);

/// Per-cloud predicted classes in eval mode.
std::vector<std::size_t> predict(const Model<float>& model, const std::vector<PointCloud>& clouds);

struct TrainResult {
  Model<float> model;
  OptimizerState optimizer;
  /// Mean train-mode loss over the training set before any update.
  double initial_loss = 0.0;
  /// One row per epoch: mean training loss; accuracies on `test` when given,
  /// otherwise on the training batches as they were seen.
  std::vector<MetricsReport> history;
};

using EpochCallback = std::function<void(const MetricsReport&)>;

/// Adam over shuffled minibatches. A trailing batch of fewer than two clouds
/// is dropped (batch norm needs two rows).
TrainResult train(Model<float> model, const std::vector<PointCloud>& train_set,
                  const std::vector<PointCloud>* test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Checkpoint of a trained model, with seeds recorded as metadata.
Checkpoint make_checkpoint(const Model<float>& model, const OptimizerState* optimizer,
                           const TrainConfig& config);

void write_history_csv(const std::vector<MetricsReport>& history, const std::filesystem::path& path);
void write_confusion_csv(const MetricsReport& report, const std::vector<std::string>& class_names,
                         const std::filesystem::path& path);
std::string summary_json(const MetricsReport& report, const std::vector<std::string>& class_names,
                         std::uint64_t seed, double initial_loss = 0.0);
void write_text(const std::string& text, const std::filesystem::path& path);

struct SweepResult {
  std::array<double, 3> radii{};
  MetricsReport validation;
};

/// Holds out `val_fraction` of `train_set` (seeded split) and trains one model
/// per radius triple in `grid`, reporting validation metrics for each.
std::vector<SweepResult> sweep_radii(const GeoCnnConfig& model_config,
                                     const TrainConfig& train_config,
                                     const std::vector<PointCloud>& train_set,
                                     const std::vector<std::array<double, 3>>& grid,
                                     double val_fraction);

}  // namespace geocnn
