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
#include <span>
#include <string>
#include <vector>

#include "geocnn/geoconv.hpp"
#include "geocnn/pointcloud.hpp"
#include "geocnn/tensor.hpp"

namespace geocnn {

struct ConvShape {
  std::size_t in = 0;
  std::size_t reduction = 0;
  std::size_t out = 0;
  double radius = 0.0;
  bool operator==(const ConvShape&) const = default;
};

/// Two-branch classifier layout.
///
/// Branch 1: per-point k-NN groups -> shared FC stack (group_widths) ->
/// channel-wise max over each group.
/// Branch 2: FC stem -> GeoConv convs[0] -> FC mid -> GeoConv convs[1] ->
/// concat with branch 1 -> GeoConv convs[2] -> FC final -> max over points.
/// Head: FC head_widths... -> FC num_classes.
/// Every FC and every GeoConv output is followed by batch norm and ReLU,
/// except the last classifier layer.
struct GeoCnnConfig {
  std::size_t n_points = 1000;
  std::size_t in_channels = 6;
  std::size_t num_classes = 40;
  std::size_t knn = 16;
  std::vector<std::size_t> group_widths{64, 128, 384};
  /// Group rows carry the neighbor's features plus its offset from the
  /// center; false feeds the raw neighbor features only.
  bool group_offsets = true;
  std::size_t stem_width = 64;
  std::array<ConvShape, 3> convs{{{64, 64, 128, 0.15}, {256, 64, 512, 0.30}, {896, 64, 768, 0.60}}};
  std::size_t mid_width = 256;
  std::size_t final_width = 2048;
  std::vector<std::size_t> head_widths{512};
  std::size_t neighbor_cap = kDefaultNeighborCap;
  /// Average edge fusion with a single reduction matrix.
  bool baseline = false;
  /// Feature-level multi-view approximation with this many uniform views.
  std::size_t multiview_views = 0;
  std::uint64_t seed = 0;

  /// 1000 points, 6 channels, 40 classes, widths and radii above.
  static GeoCnnConfig modelnet();
  /// 12 points, widths 8/4/8, 3 classes. Sized for finite-difference checks.
  static GeoCnnConfig micro();
  /// 256 points, 4 classes. Sized for single-core training in minutes.
  static GeoCnnConfig desk();

  void validate() const;  // ConfigError
  GeoConvSpec conv_spec(std::size_t i) const;
  std::size_t group_input_width() const { return in_channels + (group_offsets ? 3 : 0); }

  /// Sets one key=value field. Returns false for an unknown key; throws
  /// ConfigError for a malformed value.
  bool set(const std::string& key, const std::string& value);
  std::string to_text() const;
  /// Strict inverse of to_text(): unknown keys are errors, missing keys keep
  /// their defaults, the result is validated.
  static GeoCnnConfig from_text(const std::string& text);

  bool operator==(const GeoCnnConfig&) const = default;
};

template <typename T>
struct LinearParams {
  Matrix<T> weight;
  Matrix<T> bias;  // empty when followed by batch norm
};

/// FC (no bias) -> batch norm -> ReLU.
template <typename T>
struct DenseBlockParams {
  LinearParams<T> fc;
  BatchNormParams<T> bn;
};

template <typename T>
struct ModelParams {
  std::vector<DenseBlockParams<T>> group;
  DenseBlockParams<T> stem;
  std::array<GeoConvParams<T>, 3> conv;
  std::array<BatchNormParams<T>, 3> conv_norm;
  DenseBlockParams<T> mid;
  DenseBlockParams<T> final;
  std::vector<DenseBlockParams<T>> head;
  LinearParams<T> classifier;

  static ModelParams init(const GeoCnnConfig& config);
  static ModelParams zeros(const GeoCnnConfig& config);

  template <typename U>
  ModelParams<U> cast() const;
};

enum class TensorRole { kTrainable, kRunningStat };

template <typename T>
struct NamedTensor {
  std::string name;
  T* value;
  TensorRole role;
};

/// Every tensor of the model in a fixed order with stable names.
template <typename T>
std::vector<NamedTensor<Matrix<T>>> named_tensors(ModelParams<T>& params);
template <typename T>
std::vector<NamedTensor<const Matrix<T>>> named_tensors(const ModelParams<T>& params);

template <typename T>
class Model {
 public:
  /// Validates the config and initializes from `config.seed`.
  explicit Model(GeoCnnConfig config);
  Model(GeoCnnConfig config, ModelParams<T> params);

  const GeoCnnConfig& config() const { return config_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }

  /// Trainable scalars (running statistics excluded).
  std::size_t parameter_count() const;
  /// Summed over the three GeoConv layers: direction matrices + expansion.
  std::size_t reduction_parameter_count() const;

  template <typename U>
  Model<U> cast() const {
    return Model<U>(config_, params_.template cast<U>());
  }

 private:
  GeoCnnConfig config_;
  ModelParams<T> params_;
};

template <typename T>
struct DenseBlockCache {
  Matrix<T> input;
  BatchNormCache<T> bn;
  Matrix<T> normalized;  // before ReLU
};

/// Everything the backward pass needs from one batched forward pass.
template <typename T>
struct ForwardPass {
  Mode mode = Mode::kEval;
  std::size_t clouds = 0;
  std::size_t points = 0;

  Matrix<T> logits;

  std::vector<std::uint32_t> group_members;  // clouds*points*knn global rows
  std::vector<DenseBlockCache<T>> group;
  MaxPoolResult<T> group_pool;
  DenseBlockCache<T> stem;
  std::array<GeoConvCache<T>, 3> conv;
  std::array<BatchNormCache<T>, 3> conv_bn;
  std::array<Matrix<T>, 3> conv_normalized;
  DenseBlockCache<T> mid;
  DenseBlockCache<T> final;
  MaxPoolResult<T> global_pool;
  std::vector<DenseBlockCache<T>> head;
  Matrix<T> classifier_input;
};

/// Clouds are stacked row-wise; batch-norm statistics pool every point (or
/// group row) of every cloud in the batch. Each cloud must have
/// config.n_points points and config.in_channels channels.
template <typename T>
ForwardPass<T> forward_batch(const Model<T>& model, std::span<const PointCloud* const> clouds,
                             Mode mode);
template <typename T>
ForwardPass<T> forward_batch(const Model<T>& model, std::span<const PointCloud> clouds, Mode mode);

/// Gradients of all trainable tensors given d(loss)/d(logits).
template <typename T>
ModelParams<T> backward_batch(const Model<T>& model, const ForwardPass<T>& pass,
                              const Matrix<T>& grad_logits);

/// Folds the batch statistics of a train-mode pass into the running stats.
template <typename T>
void commit_running_stats(Model<T>& model, const ForwardPass<T>& pass);

/// Logits (1 x K) of a single cloud.
template <typename T>
Matrix<T> forward_cloud(const Model<T>& model, const PointCloud& cloud, Mode mode = Mode::kEval);

template <typename T>
struct BatchResult {
  accum_t<T> loss = 0;
  Matrix<T> logits;
  std::vector<std::size_t> predictions;
  ModelParams<T> grads;
  ForwardPass<T> pass;
};

/// Mean cross-entropy over the batch and its gradients. Does not modify the
/// model; call commit_running_stats with `result.pass` afterwards in train
/// mode.
template <typename T>
BatchResult<T> forward_backward_batch(const Model<T>& model,
                                      std::span<const PointCloud* const> clouds,
                                      std::span<const std::size_t> labels, Mode mode);

std::size_t argmax_row(std::span<const float> row);
std::size_t argmax_row(std::span<const double> row);
std::size_t argmax_row(std::span<const long double> row);

}  // namespace geocnn
