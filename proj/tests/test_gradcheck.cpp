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

#include "geocnn/gradcheck.hpp"
#include "geocnn/geoconv.hpp"
#include "geocnn/spatial.hpp"
#include "geocnn/tensor.hpp"
#include "support/oracles.hpp"

using namespace geocnn;

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / (2.1 + 1e-8), 1e-15);
  EXPECT_LT(relative_error(0.0, 1e-12), 1e-4);
}

TEST(GradCheck, CatchesAFlippedSign) {
  std::vector<double> x{0.3, -1.2, 2.0};
  std::vector<double> good{2 * 0.3, 2 * -1.2, 2 * 2.0};
  auto loss = [&] { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; };
  auto ok = check_gradients("t", {GradTarget{"x", x, good}}, loss, 1e-6);
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_TRUE(ok[0].pass);
  EXPECT_EQ(ok[0].count, 3u);
  EXPECT_EQ(x, (std::vector<double>{0.3, -1.2, 2.0}));

  auto bad = good;
  bad[1] = -bad[1];
  auto flipped = check_gradients("t", {GradTarget{"x", x, bad}}, loss, 1e-6);
  EXPECT_FALSE(flipped[0].pass);
  EXPECT_NEAR(flipped[0].max_rel_error, 1.0, 1e-6);
}

TEST(GradCheck, CatchesAFlippedGeoConvBackward) {
  Rng rng(4);
  GeoConvSpec spec;
  spec.in_channels = 3;
  spec.reduction_channels = 2;
  spec.out_channels = 4;
  spec.radius = 0.8;
  const auto pos = oracle::random_points(7, 0.4, rng);
  const auto x = oracle::random_matrix(7, 3, rng);
  const auto w = oracle::random_matrix(7, 4, rng);
  auto params = oracle::random_params(spec, rng);
  const auto nbrs = build_neighborhoods(pos, spec.radius);
  auto fwd = [&] {
    const auto y = geoconv_forward(x, nbrs, params, spec, Mode::kTrain);
    double s = 0.0;
    for (std::size_t i = 0; i < y.output.size(); ++i) s += y.output[i] * w[i];
    return s;
  };
  const auto y = geoconv_forward(x, nbrs, params, spec, Mode::kTrain);
  auto g = geoconv_backward(y.cache, params, w);
  auto& wd = params.direction_weights[3];
  auto gd = g.params.direction_weights[3];
  const auto good = check_gradients(
      "geoconv", {GradTarget{"w3", wd.values(), gd.values()}}, fwd, 1e-5);
  EXPECT_TRUE(good[0].pass) << good[0].max_rel_error;
  for (auto& v : gd.values()) v = -v;
  const auto bad = check_gradients(
      "geoconv", {GradTarget{"w3", wd.values(), gd.values()}}, fwd, 1e-5);
  EXPECT_FALSE(bad[0].pass);
}

TEST(GradCheck, ScopeNames) {
  EXPECT_EQ(parse_grad_scope("ops"), GradScope::kOps);
  EXPECT_EQ(parse_grad_scope("geoconv"), GradScope::kGeoConv);
  EXPECT_EQ(parse_grad_scope("full_model"), GradScope::kFullModel);
  EXPECT_FALSE(parse_grad_scope("model").has_value());
  for (auto s : {GradScope::kOps, GradScope::kGeoConv, GradScope::kFullModel}) {
    EXPECT_EQ(parse_grad_scope(grad_scope_name(s)), s);
  }
}

TEST(GradCheckSuite, OpsPass) {
  const auto r = gradcheck_suite(GradScope::kOps, 1, 1e-5);
  EXPECT_TRUE(r.passed()) << r.table();
  EXPECT_FALSE(r.entries.empty());
  EXPECT_NE(r.table().find("softmax"), std::string::npos);
}

TEST(GradCheckSuite, GeoConvPassesAcrossSeeds) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto r = gradcheck_suite(GradScope::kGeoConv, seed, 1e-5);
    EXPECT_TRUE(r.passed()) << "seed " << seed << "\n" << r.table();
  }
}

TEST(GradCheckSuite, FullModelPasses) {
  const auto r = gradcheck_suite(GradScope::kFullModel, 3, 1e-4);
  EXPECT_TRUE(r.passed()) << r.table();
  EXPECT_LT(r.max_rel_error(), 1e-4);
}
