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

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "geocnn/rng.hpp"

namespace geocnn {

enum class Mode { kTrain, kEval };

/// Accumulator for reductions: double, or T when T is wider.
template <typename T>
using accum_t = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

/// Dense row-major matrix. float for training and inference, double for
/// gradient checking.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

#ifndef NDEBUG
#define GEOCNN_DEBUG_FINITE(m) assert((m).all_finite())
#else
#define GEOCNN_DEBUG_FINITE(m) ((void)0)
#endif

/// a * b.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);
/// a^T * b.
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);
/// a * b^T.
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);
/// Column sums as a 1 x cols matrix.
template <typename T>
Matrix<T> column_sums(const Matrix<T>& a);
template <typename T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src);

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), drawn row-major.
template <typename T>
Matrix<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<T> m(fan_in, fan_out);
  for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

// ---------------------------------------------------------------------------
// Fully connected

template <typename T>
struct LinearGrads {
  Matrix<T> input;
  Matrix<T> weight;
  Matrix<T> bias;  // empty when the layer has no bias
};

/// y = x W + b. `bias` may be empty (no bias) or 1 x Cout.
template <typename T>
Matrix<T> linear_forward(const Matrix<T>& x, const Matrix<T>& weight, const Matrix<T>& bias);
template <typename T>
LinearGrads<T> linear_backward(const Matrix<T>& x, const Matrix<T>& weight, bool has_bias,
                               const Matrix<T>& grad_out);

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Matrix<T> relu_forward(const Matrix<T>& x);
/// Masks by the forward input: gradient flows where x > 0 (zero at x = 0).
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over rows

template <typename T>
struct BatchNormParams {
  Matrix<T> gamma;         // 1 x C
  Matrix<T> beta;          // 1 x C
  Matrix<T> running_mean;  // 1 x C
  Matrix<T> running_var;   // 1 x C

  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return gamma.cols(); }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::kEval;
  Matrix<T> normalized;       // x_hat
  std::vector<T> inv_std;     // per channel
  std::vector<T> batch_mean;  // train mode only
  std::vector<T> batch_var;   // biased, train mode only
  std::vector<std::uint8_t> active;  // empty = all rows active
  std::size_t active_rows = 0;
};

/// Normalizes each channel over the (active) rows in train mode, or with the
/// running statistics in eval mode, then applies gamma/beta. Inactive rows
/// (mask value 0) are excluded from statistics and produce exact zeros.
/// Train mode without a mask requires at least two rows.
template <typename T>
Matrix<T> batchnorm_forward(const Matrix<T>& x, const BatchNormParams<T>& params, Mode mode,
                            BatchNormCache<T>& cache,
                            std::span<const std::uint8_t> active = {});

template <typename T>
struct BatchNormGrads {
  Matrix<T> input;
  Matrix<T> gamma;
  Matrix<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                     const BatchNormParams<T>& params, const Matrix<T>& grad_out);

/// Folds the batch statistics of a train-mode pass into the running
/// statistics (running variance uses the unbiased estimate).
template <typename T>
void update_running_stats(BatchNormParams<T>& params, const BatchNormCache<T>& cache,
                          double momentum = kBatchNormMomentum);

// ---------------------------------------------------------------------------
// Channel-wise max pooling

template <typename T>
struct MaxPoolResult {
  Matrix<T> output;                  // groups x C
  std::vector<std::uint32_t> argmax;  // groups x C, absolute row index
};

/// Max over consecutive groups of `group_size` rows. Ties go to the lowest
/// row index.
template <typename T>
MaxPoolResult<T> segment_maxpool_forward(const Matrix<T>& x, std::size_t group_size);
template <typename T>
Matrix<T> segment_maxpool_backward(const MaxPoolResult<T>& fwd, std::size_t input_rows,
                                   const Matrix<T>& grad_out);

/// Max over all rows: n x C -> 1 x C.
template <typename T>
MaxPoolResult<T> channelwise_maxpool_forward(const Matrix<T>& x) {
  return segment_maxpool_forward(x, x.rows());
}
template <typename T>
Matrix<T> channelwise_maxpool_backward(const MaxPoolResult<T>& fwd, std::size_t input_rows,
                                       const Matrix<T>& grad_out) {
  return segment_maxpool_backward(fwd, input_rows, grad_out);
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
struct LossResult {
  accum_t<T> loss = 0;
  Matrix<T> grad;  // same shape as the logits
};

/// Cross-entropy of one row of logits against `label`, via log-sum-exp.
template <typename T>
LossResult<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label);

/// Mean cross-entropy over the rows of a B x K logit matrix.
template <typename T>
LossResult<T> softmax_cross_entropy_batch(const Matrix<T>& logits,
                                          std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update; `step` is the 1-based step number.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
               std::int64_t step, const AdamConfig& config);

}  // namespace geocnn
