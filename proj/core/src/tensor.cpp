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

#include "geocnn/tensor.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "geocnn/error.hpp"
#include "geocnn/parallel.hpp"

namespace geocnn {

namespace {

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

constexpr std::size_t kRowBlock = 16;

}  // namespace

template <typename T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ArgumentError("matrix data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape(rows, cols));
  }
}

template <typename T>
bool Matrix<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ArgumentError("matmul: shape mismatch " + shape(a.rows(), a.cols()) + " * " +
                        shape(b.rows(), b.cols()));
  }
  Matrix<T> out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t cols = b.cols();
  parallel_for(0, a.rows(), [&](std::size_t i) {
    T* o = out.data() + i * cols;
    const T* ar = a.data() + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = ar[k];
      if (aik == T{0}) continue;
      const T* br = b.data() + k * cols;
      for (std::size_t j = 0; j < cols; ++j) o[j] += aik * br[j];
    }
  });
  return out;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ArgumentError("matmul_tn: shape mismatch " + shape(a.rows(), a.cols()) + "^T * " +
                        shape(b.rows(), b.cols()));
  }
  const std::size_t n = a.rows();
  const std::size_t ni = a.cols();
  const std::size_t nj = b.cols();
  Matrix<T> out(ni, nj);
  const std::size_t blocks = (ni + kRowBlock - 1) / kRowBlock;
  // Each output element accumulates over rows in ascending order regardless
  // of the blocking, so results are independent of the worker count.
  parallel_for(0, blocks, [&](std::size_t blk) {
    const std::size_t i0 = blk * kRowBlock;
    const std::size_t i1 = std::min(ni, i0 + kRowBlock);
    for (std::size_t r = 0; r < n; ++r) {
      const T* ar = a.data() + r * ni;
      const T* br = b.data() + r * nj;
      for (std::size_t i = i0; i < i1; ++i) {
        const T ari = ar[i];
        if (ari == T{0}) continue;
        T* o = out.data() + i * nj;
        for (std::size_t j = 0; j < nj; ++j) o[j] += ari * br[j];
      }
    }
  });
  return out;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ArgumentError("matmul_nt: shape mismatch " + shape(a.rows(), a.cols()) + " * " +
                        shape(b.rows(), b.cols()) + "^T");
  }
  const std::size_t inner = a.cols();
  const std::size_t cols = b.rows();
  Matrix<T> bt(inner, cols);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = 0; j < inner; ++j) bt(j, i) = b(i, j);
  }
  // Same ascending-j accumulation per element as the dot-product form, but
  // the inner loop runs over contiguous outputs.
  Matrix<T> out(a.rows(), cols);
  parallel_for(0, a.rows(), [&](std::size_t r) {
    const T* ar = a.data() + r * inner;
    T* o = out.data() + r * cols;
    for (std::size_t j = 0; j < inner; ++j) {
      const T arj = ar[j];
      const T* br = bt.data() + j * cols;
      for (std::size_t i = 0; i < cols; ++i) o[i] += arj * br[i];
    }
  });
  return out;
}

template <typename T>
Matrix<T> column_sums(const Matrix<T>& a) {
  Matrix<T> out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T* ar = a.data() + r * a.cols();
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += ar[c];
  }
  return out;
}

template <typename T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src) {
  if (!dst.same_shape(src)) {
    throw ArgumentError("add: shape mismatch " + shape(dst.rows(), dst.cols()) + " vs " +
                        shape(src.rows(), src.cols()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
Matrix<T> linear_forward(const Matrix<T>& x, const Matrix<T>& weight, const Matrix<T>& bias) {
  if (!bias.empty() && (bias.rows() != 1 || bias.cols() != weight.cols())) {
    throw ArgumentError("linear: bias shape " + shape(bias.rows(), bias.cols()) +
                        " does not match weight " + shape(weight.rows(), weight.cols()));
  }
  Matrix<T> y = matmul(x, weight);
  if (!bias.empty()) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T* yr = y.data() + r * y.cols();
      for (std::size_t c = 0; c < y.cols(); ++c) yr[c] += bias[c];
    }
  }
  GEOCNN_DEBUG_FINITE(y);
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Matrix<T>& x, const Matrix<T>& weight, bool has_bias,
                               const Matrix<T>& grad_out) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != weight.cols()) {
    throw ArgumentError("linear_backward: gradient shape " +
                        shape(grad_out.rows(), grad_out.cols()) + " does not match output");
  }
  LinearGrads<T> g;
  g.input = matmul_nt(grad_out, weight);
  g.weight = matmul_tn(x, grad_out);
  if (has_bias) g.bias = column_sums(grad_out);
  return g;
}

template <typename T>
Matrix<T> relu_forward(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& grad_out) {
  if (!x.same_shape(grad_out)) throw ArgumentError("relu_backward: shape mismatch");
  Matrix<T> g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels) {
  return {Matrix<T>(1, channels, T{1}), Matrix<T>(1, channels, T{0}),
          Matrix<T>(1, channels, T{0}), Matrix<T>(1, channels, T{1})};
}

template <typename T>
Matrix<T> batchnorm_forward(const Matrix<T>& x, const BatchNormParams<T>& params, Mode mode,
                            BatchNormCache<T>& cache, std::span<const std::uint8_t> active) {
  using Acc = accum_t<T>;
  const std::size_t n = x.rows();
  const std::size_t c = x.cols();
  if (params.channels() != c) {
    throw ArgumentError("batchnorm: " + std::to_string(c) + " channels, parameters have " +
                        std::to_string(params.channels()));
  }
  if (!active.empty() && active.size() != n) throw ArgumentError("batchnorm: mask length mismatch");
  if (mode == Mode::kTrain && active.empty() && n < 2) {
    throw ArgumentError("batchnorm: train mode needs at least 2 rows, got " + std::to_string(n));
  }
  auto is_active = [&](std::size_t r) { return active.empty() || active[r] != 0; };

  cache.mode = mode;
  cache.active.assign(active.begin(), active.end());
  cache.active_rows = 0;
  for (std::size_t r = 0; r < n; ++r) cache.active_rows += is_active(r) ? 1 : 0;
  cache.inv_std.assign(c, T{0});
  cache.batch_mean.assign(c, T{0});
  cache.batch_var.assign(c, T{0});
  cache.normalized = Matrix<T>(n, c);

  std::vector<Acc> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::kTrain) {
    if (cache.active_rows > 0) {
      for (std::size_t r = 0; r < n; ++r) {
        if (!is_active(r)) continue;
        const T* xr = x.data() + r * c;
        for (std::size_t k = 0; k < c; ++k) mean[k] += xr[k];
      }
      for (auto& m : mean) m /= static_cast<Acc>(cache.active_rows);
      for (std::size_t r = 0; r < n; ++r) {
        if (!is_active(r)) continue;
        const T* xr = x.data() + r * c;
        for (std::size_t k = 0; k < c; ++k) {
          const Acc d = xr[k] - mean[k];
          var[k] += d * d;
        }
      }
      for (auto& v : var) v /= static_cast<Acc>(cache.active_rows);
    }
  } else {
    for (std::size_t k = 0; k < c; ++k) {
      mean[k] = params.running_mean[k];
      var[k] = params.running_var[k];
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    cache.inv_std[k] = static_cast<T>(1.0 / std::sqrt(var[k] + kBatchNormEps));
    cache.batch_mean[k] = static_cast<T>(mean[k]);
    cache.batch_var[k] = static_cast<T>(var[k]);
  }

  Matrix<T> y(n, c);
  for (std::size_t r = 0; r < n; ++r) {
    if (!is_active(r)) continue;
    const T* xr = x.data() + r * c;
    T* hr = cache.normalized.data() + r * c;
    T* yr = y.data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      hr[k] = (xr[k] - cache.batch_mean[k]) * cache.inv_std[k];
      yr[k] = params.gamma[k] * hr[k] + params.beta[k];
    }
  }
  GEOCNN_DEBUG_FINITE(y);
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                     const BatchNormParams<T>& params, const Matrix<T>& grad_out) {
  using Acc = accum_t<T>;
  const std::size_t n = cache.normalized.rows();
  const std::size_t c = cache.normalized.cols();
  if (grad_out.rows() != n || grad_out.cols() != c) {
    throw ArgumentError("batchnorm_backward: gradient shape mismatch");
  }
  auto is_active = [&](std::size_t r) { return cache.active.empty() || cache.active[r] != 0; };

  std::vector<Acc> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (!is_active(r)) continue;
    const T* gr = grad_out.data() + r * c;
    const T* hr = cache.normalized.data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      sum_dy[k] += gr[k];
      sum_dy_xhat[k] += static_cast<Acc>(gr[k]) * hr[k];
    }
  }

  BatchNormGrads<T> g;
  g.gamma = Matrix<T>(1, c);
  g.beta = Matrix<T>(1, c);
  for (std::size_t k = 0; k < c; ++k) {
    g.gamma[k] = static_cast<T>(sum_dy_xhat[k]);
    g.beta[k] = static_cast<T>(sum_dy[k]);
  }
  g.input = Matrix<T>(n, c);
  const Acc m = static_cast<Acc>(cache.active_rows);
  for (std::size_t r = 0; r < n; ++r) {
    if (!is_active(r)) continue;
    const T* gr = grad_out.data() + r * c;
    const T* hr = cache.normalized.data() + r * c;
    T* dr = g.input.data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      const Acc scale = static_cast<Acc>(params.gamma[k]) * cache.inv_std[k];
      if (cache.mode == Mode::kTrain) {
        dr[k] = static_cast<T>(scale * (gr[k] - sum_dy[k] / m - hr[k] * sum_dy_xhat[k] / m));
      } else {
        dr[k] = static_cast<T>(scale * gr[k]);
      }
    }
  }
  return g;
}

template <typename T>
void update_running_stats(BatchNormParams<T>& params, const BatchNormCache<T>& cache,
                          double momentum) {
  if (cache.mode != Mode::kTrain || cache.active_rows == 0) return;
  const double m = static_cast<double>(cache.active_rows);
  const double unbiased = m > 1.0 ? m / (m - 1.0) : 1.0;
  for (std::size_t k = 0; k < params.channels(); ++k) {
    params.running_mean[k] = static_cast<T>((1.0 - momentum) * params.running_mean[k] +
                                            momentum * cache.batch_mean[k]);
    params.running_var[k] = static_cast<T>((1.0 - momentum) * params.running_var[k] +
                                           momentum * cache.batch_var[k] * unbiased);
  }
}

template <typename T>
MaxPoolResult<T> segment_maxpool_forward(const Matrix<T>& x, std::size_t group_size) {
  if (group_size == 0 || x.rows() == 0 || x.rows() % group_size != 0) {
    throw ArgumentError("maxpool: " + std::to_string(x.rows()) + " rows do not split into groups of " +
                        std::to_string(group_size));
  }
  const std::size_t groups = x.rows() / group_size;
  const std::size_t c = x.cols();
  MaxPoolResult<T> res;
  res.output = Matrix<T>(groups, c);
  res.argmax.assign(groups * c, 0);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t r0 = g * group_size;
    T* out = res.output.data() + g * c;
    std::uint32_t* arg = res.argmax.data() + g * c;
    const T* first = x.data() + r0 * c;
    for (std::size_t k = 0; k < c; ++k) {
      out[k] = first[k];
      arg[k] = static_cast<std::uint32_t>(r0);
    }
    for (std::size_t r = r0 + 1; r < r0 + group_size; ++r) {
      const T* xr = x.data() + r * c;
      for (std::size_t k = 0; k < c; ++k) {
        if (xr[k] > out[k]) {
          out[k] = xr[k];
          arg[k] = static_cast<std::uint32_t>(r);
        }
      }
    }
  }
  return res;
}

template <typename T>
Matrix<T> segment_maxpool_backward(const MaxPoolResult<T>& fwd, std::size_t input_rows,
                                   const Matrix<T>& grad_out) {
  if (!grad_out.same_shape(fwd.output)) throw ArgumentError("maxpool_backward: shape mismatch");
  const std::size_t c = grad_out.cols();
  Matrix<T> g(input_rows, c);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    g(fwd.argmax[i], i % c) += grad_out[i];
  }
  return g;
}

template <typename T>
LossResult<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label) {
  using Acc = accum_t<T>;
  const std::size_t k = logits.size();
  if (k < 2) throw ArgumentError("softmax_cross_entropy: need at least 2 classes");
  if (label >= k) {
    throw ArgumentError("softmax_cross_entropy: label " + std::to_string(label) +
                        " out of range for " + std::to_string(k) + " classes");
  }
  Acc mx = -std::numeric_limits<Acc>::infinity();
  for (T v : logits) mx = std::max(mx, static_cast<Acc>(v));
  Acc sum = 0.0;
  for (T v : logits) sum += std::exp(static_cast<Acc>(v) - mx);
  const Acc lse = mx + std::log(sum);
  LossResult<T> res;
  res.loss = lse - static_cast<Acc>(logits[label]);
  res.grad = Matrix<T>(1, k);
  for (std::size_t i = 0; i < k; ++i) {
    const Acc p = std::exp(static_cast<Acc>(logits[i]) - lse);
    res.grad[i] = static_cast<T>(p - (i == label ? 1.0 : 0.0));
  }
  return res;
}

template <typename T>
LossResult<T> softmax_cross_entropy_batch(const Matrix<T>& logits,
                                          std::span<const std::size_t> labels) {
  using Acc = accum_t<T>;
  if (logits.rows() == 0) throw ArgumentError("softmax_cross_entropy: empty batch");
  if (labels.size() != logits.rows()) throw ArgumentError("softmax_cross_entropy: label count mismatch");
  LossResult<T> res;
  res.grad = Matrix<T>(logits.rows(), logits.cols());
  const Acc inv_b = 1.0 / static_cast<Acc>(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto one = softmax_cross_entropy(logits.row(b), labels[b]);
    res.loss += one.loss * inv_b;
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      res.grad(b, k) = static_cast<T>(one.grad[k] * inv_b);
    }
  }
  return res;
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
               std::int64_t step, const AdamConfig& config) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ArgumentError("adam_step: buffer sizes differ");
  }
  if (step < 1) throw ArgumentError("adam_step: step numbers start at 1");
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update =
        config.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + config.epsilon);
    params[i] = static_cast<T>(params[i] - update);
  }
}

#define GEOCNN_INSTANTIATE_TENSOR(T)                                                          \
  template class Matrix<T>;                                                                    \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                               \
  template Matrix<T> matmul_tn(const Matrix<T>&, const Matrix<T>&);                            \
  template Matrix<T> matmul_nt(const Matrix<T>&, const Matrix<T>&);                            \
  template Matrix<T> column_sums(const Matrix<T>&);                                            \
  template void add_inplace(Matrix<T>&, const Matrix<T>&);                                     \
  template Matrix<T> linear_forward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&);     \
  template LinearGrads<T> linear_backward(const Matrix<T>&, const Matrix<T>&, bool,            \
                                          const Matrix<T>&);                                   \
  template Matrix<T> relu_forward(const Matrix<T>&);                                           \
  template Matrix<T> relu_backward(const Matrix<T>&, const Matrix<T>&);                        \
  template struct BatchNormParams<T>;                                                          \
  template Matrix<T> batchnorm_forward(const Matrix<T>&, const BatchNormParams<T>&, Mode,      \
                                       BatchNormCache<T>&, std::span<const std::uint8_t>);     \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&,                      \
                                                const BatchNormParams<T>&, const Matrix<T>&);  \
  template void update_running_stats(BatchNormParams<T>&, const BatchNormCache<T>&, double);   \
  template MaxPoolResult<T> segment_maxpool_forward(const Matrix<T>&, std::size_t);            \
  template Matrix<T> segment_maxpool_backward(const MaxPoolResult<T>&, std::size_t,            \
                                              const Matrix<T>&);                               \
  template LossResult<T> softmax_cross_entropy(std::span<const T>, std::size_t);               \
  template LossResult<T> softmax_cross_entropy_batch(const Matrix<T>&,                         \
                                                     std::span<const std::size_t>);            \
  template void adam_step(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,        \
                          std::int64_t, const AdamConfig&);

GEOCNN_INSTANTIATE_TENSOR(float)
GEOCNN_INSTANTIATE_TENSOR(double)
GEOCNN_INSTANTIATE_TENSOR(long double)

}  // namespace geocnn
