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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "geocnn/error.hpp"
#include "geocnn/gradcheck.hpp"
#include "geocnn/tensor.hpp"
#include "support/oracles.hpp"

using namespace geocnn;
namespace orc = geocnn::oracle;

namespace {

Matrix<double> naive_matmul(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

Matrix<double> transpose(const Matrix<double>& a) {
  Matrix<double> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

double dot(const Matrix<double>& a, const Matrix<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> copy(const Matrix<double>& m) { return {m.values().begin(), m.values().end()}; }

void expect_all_pass(const std::vector<GradCheckEntry>& entries) {
  ASSERT_FALSE(entries.empty());
  for (const auto& e : entries) EXPECT_TRUE(e.pass) << e.name << " rel=" << e.max_rel_error;
}

}  // namespace

TEST(Matmul, MatchesNaiveInAllLayouts) {
  Rng rng(31);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 1 + rng.below(40), k = 1 + rng.below(40), m = 1 + rng.below(40);
    auto a = orc::random_matrix(n, k, rng);
    for (std::size_t i = 0; i < a.size(); i += 3) a[i] = 0.0;  // exercises the zero skip
    const auto b = orc::random_matrix(k, m, rng);
    const auto ref = naive_matmul(a, b);
    const auto got = matmul(a, b);
    const auto tn = matmul_tn(transpose(a), b);
    const auto nt = matmul_nt(a, transpose(b));
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(got[i], ref[i], 1e-12);
      EXPECT_NEAR(tn[i], ref[i], 1e-12);
      EXPECT_NEAR(nt[i], ref[i], 1e-12);
    }
  }
  EXPECT_THROW(matmul(Matrix<double>(2, 3), Matrix<double>(2, 3)), ArgumentError);
  EXPECT_THROW(matmul_tn(Matrix<double>(2, 3), Matrix<double>(3, 3)), ArgumentError);
  EXPECT_THROW(matmul_nt(Matrix<double>(2, 3), Matrix<double>(3, 2)), ArgumentError);
}

TEST(Linear, IdentityAndDotProduct) {
  Rng rng(32);
  const auto x = orc::random_matrix(5, 4, rng);
  Matrix<double> eye(4, 4);
  for (int i = 0; i < 4; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(linear_forward(x, eye, Matrix<double>(1, 4)), x);

  const Matrix<double> row(1, 3, {1, 2, 3});
  const Matrix<double> col(3, 1, {4, 5, 6});
  EXPECT_EQ(linear_forward(row, col, {})(0, 0), 32.0);
  EXPECT_THROW(linear_forward(row, col, Matrix<double>(1, 2)), ArgumentError);
}

TEST(Linear, Gradcheck) {
  Rng rng(33);
  auto x = orc::random_matrix(5, 4, rng);
  auto w = orc::random_matrix(4, 3, rng);
  auto b = orc::random_matrix(1, 3, rng);
  const auto probe = orc::random_matrix(5, 3, rng);
  const auto g = linear_backward(x, w, true, probe);
  auto loss = [&] { return dot(linear_forward(x, w, b), probe); };
  const auto gx = copy(g.input), gw = copy(g.weight), gb = copy(g.bias);
  expect_all_pass(check_gradients("linear", {{"x", x.values(), gx}, {"w", w.values(), gw}, {"b", b.values(), gb}},
                                  loss, 1e-6));
}

TEST(Relu, ForwardBackwardAndGradcheck) {
  const Matrix<double> x(1, 3, {-1.0, 0.0, 2.5});
  const auto y = relu_forward(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.5);
  const auto g = relu_backward(x, Matrix<double>(1, 3, 1.0));
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);  // gradient at 0 is 0
  EXPECT_EQ(g[2], 1.0);

  Rng rng(34);
  auto r = orc::random_matrix(6, 5, rng);
  for (auto& v : r.values()) {
    if (std::abs(v) < 1e-3) v = 0.5;
  }
  const auto probe = orc::random_matrix(6, 5, rng);
  const auto ga = copy(relu_backward(r, probe));
  expect_all_pass(check_gradients("relu", {{"x", r.values(), ga}},
                                  [&] { return dot(relu_forward(r), probe); }, 1e-6));
}

TEST(BatchNorm, TrainModeStatistics) {
  Rng rng(35);
  const auto x = orc::random_matrix(50, 4, rng, -3.0, 5.0);
  auto p = BatchNormParams<double>::identity(4);
  BatchNormCache<double> cache;
  const auto y = batchnorm_forward(x, p, Mode::kTrain, cache);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 50; ++r) m += y(r, c);
    m /= 50;
    for (std::size_t r = 0; r < 50; ++r) v += (y(r, c) - m) * (y(r, c) - m);
    v /= 50;
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
  BatchNormCache<double> c1;
  EXPECT_THROW(batchnorm_forward(Matrix<double>(1, 4), p, Mode::kTrain, c1), ArgumentError);
}

TEST(BatchNorm, EvalIdentityWithUnitStats) {
  Rng rng(36);
  const auto x = orc::random_matrix(7, 3, rng);
  BatchNormCache<double> cache;
  const auto y = batchnorm_forward(x, BatchNormParams<double>::identity(3), Mode::kEval, cache);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, MaskedRowsAreZeroAndExcluded) {
  Rng rng(37);
  auto x = orc::random_matrix(6, 2, rng);
  const std::vector<std::uint8_t> active = {1, 0, 1, 1, 0, 1};
  auto p = BatchNormParams<double>::identity(2);
  p.beta.fill(0.3);
  BatchNormCache<double> cache;
  const auto y = batchnorm_forward(x, p, Mode::kTrain, cache, active);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(4, 1), 0.0);
  // Changing an inactive row does not change the statistics.
  x(1, 0) = 1e6;
  BatchNormCache<double> cache2;
  const auto y2 = batchnorm_forward(x, p, Mode::kTrain, cache2, active);
  EXPECT_EQ(y2(0, 0), y(0, 0));
}

TEST(BatchNorm, RunningStatsUseMomentumAndUnbiasedVariance) {
  const Matrix<double> x(2, 1, {1.0, 3.0});
  auto p = BatchNormParams<double>::identity(1);
  BatchNormCache<double> cache;
  batchnorm_forward(x, p, Mode::kTrain, cache);
  update_running_stats(p, cache);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(p.running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-12);
}

TEST(BatchNorm, Gradcheck) {
  Rng rng(38);
  for (bool masked : {false, true}) {
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      auto x = orc::random_matrix(8, 3, rng);
      auto p = BatchNormParams<double>::identity(3);
      p.gamma = orc::random_matrix(1, 3, rng, 0.5, 1.5);
      p.beta = orc::random_matrix(1, 3, rng);
      p.running_mean = orc::random_matrix(1, 3, rng, -0.2, 0.2);
      p.running_var = orc::random_matrix(1, 3, rng, 0.5, 2.0);
      std::vector<std::uint8_t> active;
      if (masked) active = {1, 1, 0, 1, 1, 0, 1, 1};
      const auto probe = orc::random_matrix(8, 3, rng);
      BatchNormCache<double> cache;
      batchnorm_forward(x, p, mode, cache, active);
      const auto g = batchnorm_backward(cache, p, probe);
      auto loss = [&] {
        BatchNormCache<double> c;
        return dot(batchnorm_forward(x, p, mode, c, active), probe);
      };
      const auto gx = copy(g.input), gg = copy(g.gamma), gb = copy(g.beta);
      expect_all_pass(check_gradients("bn", {{"x", x.values(), gx}, {"gamma", p.gamma.values(), gg},
                                             {"beta", p.beta.values(), gb}},
                                      loss, 1e-5));
    }
  }
}

TEST(MaxPool, SingleRowPermutationAndTies) {
  const Matrix<double> one(1, 3, {1, -2, 3});
  EXPECT_EQ(channelwise_maxpool_forward(one).output, one);

  Rng rng(39);
  const auto x = orc::random_matrix(10, 4, rng);
  Matrix<double> perm(10, 4);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 4; ++c) perm(r, c) = x(9 - r, c);
  }
  EXPECT_EQ(channelwise_maxpool_forward(x).output, channelwise_maxpool_forward(perm).output);

  const Matrix<double> tie(3, 1, {2, 5, 5});
  const auto f = channelwise_maxpool_forward(tie);
  EXPECT_EQ(f.argmax[0], 1u);
  const auto g = channelwise_maxpool_backward(f, 3, Matrix<double>(1, 1, 1.0));
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_THROW(segment_maxpool_forward(x, 3), ArgumentError);
}

TEST(MaxPool, Gradcheck) {
  Rng rng(40);
  auto x = orc::random_matrix(12, 3, rng);  // continuous draws: tie-free
  const auto probe = orc::random_matrix(3, 3, rng);
  const auto f = segment_maxpool_forward(x, 4);
  const auto g = copy(segment_maxpool_backward(f, 12, probe));
  expect_all_pass(check_gradients("maxpool", {{"x", x.values(), g}},
                                  [&] { return dot(segment_maxpool_forward(x, 4).output, probe); },
                                  1e-6));
}

TEST(Softmax, UniformStableAndErrors) {
  const std::vector<double> uniform(4, 0.7);
  EXPECT_NEAR(softmax_cross_entropy<double>(uniform, 2).loss, std::log(4.0), 1e-12);
  const std::vector<float> big = {1000.f, 0.f};
  const auto r = softmax_cross_entropy<float>(big, 0);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-6);
  EXPECT_TRUE(r.grad.all_finite());
  EXPECT_THROW(softmax_cross_entropy<double>(uniform, 4), ArgumentError);
  const std::vector<double> one = {1.0};
  EXPECT_THROW(softmax_cross_entropy<double>(one, 0), ArgumentError);
}

TEST(Softmax, GradientIsSoftmaxMinusOneHotAndGradcheck) {
  Rng rng(41);
  auto logits = orc::random_matrix(3, 5, rng, -2.0, 2.0);
  const std::vector<std::size_t> labels = {0, 4, 2};
  const auto res = softmax_cross_entropy_batch(logits, labels);
  const auto g = copy(res.grad);
  expect_all_pass(check_gradients(
      "softmax", {{"logits", logits.values(), g}},
      [&] { return static_cast<double>(softmax_cross_entropy_batch(logits, labels).loss); }, 1e-6));
  const auto single = softmax_cross_entropy<double>(logits.row(1), 4);
  double z = 0.0;
  for (double v : logits.row(1)) z += std::exp(v);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(single.grad[i], std::exp(logits(1, i)) / z - (i == 4 ? 1.0 : 0.0), 1e-12);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<float> p = {1.f, -2.f}, g = {0.f, 0.f}, m = {0.f, 0.f}, v = {0.f, 0.f};
  adam_step<float>(p, g, m, v, 1, AdamConfig{});
  EXPECT_EQ(p[0], 1.f);
  EXPECT_EQ(p[1], -2.f);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  std::vector<double> p = {0.0, 0.0}, g = {50.0, -30.0}, m(2), v(2);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step<double>(p, g, m, v, 1, cfg);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-9);
  EXPECT_THROW(adam_step<double>(p, g, m, v, 0, cfg), ArgumentError);
}

TEST(Adam, RepeatRunsAreBitwiseEqual) {
  auto run = [] {
    Rng rng(42);
    std::vector<float> p(20), m(20), v(20), g(20);
    for (auto& x : p) x = static_cast<float>(rng.normal());
    for (int s = 1; s <= 50; ++s) {
      for (auto& x : g) x = static_cast<float>(rng.normal());
      adam_step<float>(p, g, m, v, s, AdamConfig{});
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(Glorot, BoundsAndDeterminism) {
  Rng a(1), b(1);
  const auto w = glorot_uniform<float>(30, 20, a);
  EXPECT_EQ(w, glorot_uniform<float>(30, 20, b));
  const float bound = std::sqrt(6.0f / 50.0f);
  for (float v : w.values()) {
    EXPECT_LE(std::abs(v), bound);
  }
}
