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
#include <cstring>
#include <numbers>

#include "geocnn/error.hpp"
#include "geocnn/geoconv.hpp"
#include "support/oracles.hpp"

using namespace geocnn;
namespace orc = geocnn::oracle;

namespace {

GeoConvSpec tiny_spec(std::size_t cin, std::size_t cr, std::size_t co, double r) {
  GeoConvSpec s;
  s.in_channels = cin;
  s.reduction_channels = cr;
  s.out_channels = co;
  s.radius = r;
  return s;
}

std::size_t active_points(const NeighborhoodSet& n) {
  std::size_t a = 0;
  for (const auto& l : n.lists) a += l.empty() ? 0 : 1;
  return a;
}

}  // namespace

TEST(Quadrant, SignPatterns) {
  EXPECT_EQ(quadrant_bases({0.2, -0.1, 0.3}), (QuadrantBases{kPosX, kNegY, kPosZ}));
  EXPECT_EQ(quadrant_bases({0, 0, 1}), (QuadrantBases{kPosX, kPosY, kPosZ}));
  EXPECT_EQ(quadrant_bases({-1, -1, -1}), (QuadrantBases{kNegX, kNegY, kNegZ}));
  EXPECT_THROW(quadrant_bases({0, 0, 0}), ArgumentError);
}

TEST(Coefficients, Examples) {
  auto c = decomposition_coefficients({1, 0, 0}, quadrant_bases({1, 0, 0}));
  EXPECT_EQ(c, (std::array<double, 3>{1, 0, 0}));
  c = decomposition_coefficients({1, 1, 1}, quadrant_bases({1, 1, 1}));
  for (double v : c) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  c = decomposition_coefficients({3, 4, 0}, quadrant_bases({3, 4, 0}));
  EXPECT_NEAR(c[0], 9.0 / 25.0, 1e-15);
  EXPECT_NEAR(c[1], 16.0 / 25.0, 1e-15);
  EXPECT_EQ(c[2], 0.0);
  EXPECT_THROW(decomposition_coefficients({0, 0, 0}, {0, 2, 4}), ArgumentError);
}

TEST(Coefficients, SelectedBasesHaveNonnegativeProjection) {
  Rng rng(51);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 e{rng.normal(), rng.normal(), rng.normal()};
    const auto q = quadrant_bases(e);
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(q[k] / 2, k);
      const auto& b = kBases[q[k]];
      EXPECT_GE(e[0] * b[0] + e[1] * b[1] + e[2] * b[2], 0.0);
    }
  }
}

TEST(Bases, UnitAndAntipodal) {
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& a = kBases[2 * k];
    const auto& b = kBases[2 * k + 1];
    EXPECT_EQ(a[0] * a[0] + a[1] * a[1] + a[2] * a[2], 1.0);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(a[j], -b[j]);
  }
}

TEST(DistanceWeight, ExamplesAndMonotone) {
  EXPECT_EQ(distance_weight(0.5, 0.5), 0.0);
  EXPECT_NEAR(distance_weight(0.1, 0.5), 0.16, 1e-15);
  EXPECT_THROW(distance_weight(0.6, 0.5), ArgumentError);
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 100; ++i) {
    const double w = distance_weight(0.5 * i / 100.0, 0.5);
    EXPECT_LT(w, prev);
    EXPECT_GE(w, 0.0);
    prev = w;
  }
}

TEST(GeoConvForward, EmptyNeighborhoodsLeaveCenterPath) {
  Rng rng(52);
  const auto spec = tiny_spec(3, 2, 4, 0.01);
  auto p = GeoConvParams<double>::init(spec, rng);
  const std::vector<Point3> pts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const auto x = orc::random_matrix(3, 3, rng);
  const auto out = geoconv_forward(x, build_neighborhoods(pts, spec.radius), p, spec, Mode::kTrain);
  EXPECT_EQ(out.output, matmul(x, p.center_weight));
}

TEST(GeoConvForward, HandEvaluatedScalarPipeline) {
  auto spec = tiny_spec(1, 1, 1, 0.5);
  spec.bias = false;
  spec.reduction_norm = false;
  Rng rng(53);
  auto p = GeoConvParams<double>::init(spec, rng);
  p.center_weight.fill(0.0);
  p.direction_weights[kPosX].fill(1.0);
  p.expand_weight.fill(1.0);
  const std::vector<Point3> pts = {{0, 0, 0}, {0.1f, 0, 0}};
  const Matrix<double> x(2, 1, {7.0, 2.0});
  const auto out = geoconv_forward(x, build_neighborhoods(pts, 0.5), p, spec, Mode::kEval);
  EXPECT_DOUBLE_EQ(out.output(0, 0), 2.0);
}

TEST(GeoConvForward, AllNeighborsOnBoundaryAreMasked) {
  // Neighbor exactly at distance r: weight 0, edge term must be exactly zero.
  auto spec = tiny_spec(2, 2, 2, 0.5);
  Rng rng(54);
  const auto p = orc::random_params(spec, rng);
  const std::vector<Point3> pts = {{0, 0, 0}, {0.5f, 0, 0}, {3, 0, 0}, {3.1f, 0, 0}, {3, 0.2f, 0}};
  const auto x = orc::random_matrix(5, 2, rng);
  const auto nbrs = build_neighborhoods(pts, 0.5);
  ASSERT_EQ(nbrs.lists[0].size(), 1u);
  const auto out = geoconv_forward(x, nbrs, p, spec, Mode::kTrain);
  const auto center = linear_forward(x, p.center_weight, p.center_bias);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(out.output(0, c), center(0, c));
    EXPECT_EQ(out.output(1, c), center(1, c));
  }
  EXPECT_TRUE(out.output.all_finite());
  EXPECT_EQ(out.cache.table.active[0], 0);
}

TEST(GeoConvForward, MatchesLiteralEvaluator) {
  Rng rng(55);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 3 + rng.below(8);
    auto spec = tiny_spec(1 + rng.below(4), 1 + rng.below(3), 1 + rng.below(4), rng.uniform(0.4, 1.0));
    spec.bias = t % 3 != 0;
    orc::LayerInput in;
    in.positions = orc::random_points(n, 0.5, rng);
    in.radius = spec.radius;
    in.bias = spec.bias;
    in.train = t % 2 == 0;
    const auto nbrs = build_neighborhoods(in.positions, spec.radius);
    if (in.train && active_points(nbrs) < 2) continue;
    const auto x = orc::random_matrix(n, spec.in_channels, rng);
    in.x = orc::to_dmat(x);
    const auto p = orc::random_params(spec, rng);
    const auto got = geoconv_forward(x, nbrs, p, spec, in.train ? Mode::kTrain : Mode::kEval);
    EXPECT_LT(orc::max_abs_diff(got.output, orc::geoconv(in, p)), 1e-10);
  }
}

TEST(GeoConvForward, SpecTinyInstanceFloatPrecision) {
  // n=6, Cin=3, Creduc=2, Cout=4, r=0.6 in production precision.
  Rng rng(56);
  int checked = 0;
  while (checked < 10) {
    const auto spec = tiny_spec(3, 2, 4, 0.6);
    orc::LayerInput in;
    in.positions = orc::random_points(6, 0.5, rng);
    in.radius = 0.6;
    const auto nbrs = build_neighborhoods(in.positions, 0.6);
    if (active_points(nbrs) < 2) continue;
    const auto x = orc::random_matrix(6, 3, rng);
    in.x = orc::to_dmat(x);
    in.train = false;
    const auto p = orc::random_params(spec, rng);
    GeoConvParams<float> pf;
    pf.center_weight = p.center_weight.cast<float>();
    pf.center_bias = p.center_bias.cast<float>();
    for (const auto& w : p.direction_weights) pf.direction_weights.push_back(w.cast<float>());
    pf.expand_weight = p.expand_weight.cast<float>();
    pf.expand_bias = p.expand_bias.cast<float>();
    pf.norm = {p.norm.gamma.cast<float>(), p.norm.beta.cast<float>(),
               p.norm.running_mean.cast<float>(), p.norm.running_var.cast<float>()};
    const auto got = geoconv_forward(x.cast<float>(), nbrs, pf, spec, Mode::kEval);
    EXPECT_LT(orc::max_abs_diff(got.output.cast<double>(), orc::geoconv(in, p)), 1e-5);
    ++checked;
  }
}

TEST(GeoConvForward, DistanceWeightScaleInvariance) {
  Rng rng(57);
  const auto spec = tiny_spec(3, 2, 3, 0.5);
  const auto pts = orc::random_points(40, 0.6, rng);
  const auto x = orc::random_matrix(40, 3, rng);
  const auto p = orc::random_params(spec, rng);
  const auto nbrs = build_neighborhoods(pts, 0.5);
  const auto a = geoconv_forward(x, build_edge_table(nbrs, spec.fusion), p, spec, Mode::kTrain);
  const auto b = geoconv_forward(x, build_edge_table(nbrs, spec.fusion, 37.5), p, spec, Mode::kTrain);
  for (std::size_t i = 0; i < a.output.size(); ++i) EXPECT_NEAR(a.output[i], b.output[i], 1e-12);
}

TEST(GeoConvForward, ShapeErrors) {
  Rng rng(58);
  const auto spec = tiny_spec(3, 2, 3, 0.5);
  const auto p = GeoConvParams<double>::init(spec, rng);
  const auto pts = orc::random_points(5, 0.5, rng);
  const auto nbrs = build_neighborhoods(pts, 0.5);
  EXPECT_THROW(geoconv_forward(Matrix<double>(5, 2), nbrs, p, spec, Mode::kEval), ArgumentError);
  EXPECT_THROW(geoconv_forward(Matrix<double>(4, 3), nbrs, p, spec, Mode::kEval), ArgumentError);
  EXPECT_THROW(geoconv_forward(Matrix<double>(5, 3), build_neighborhoods(pts, 0.4), p, spec, Mode::kEval),
               ArgumentError);
  auto bad = p;
  bad.direction_weights.pop_back();
  EXPECT_THROW(geoconv_forward(Matrix<double>(5, 3), nbrs, bad, spec, Mode::kEval), ArgumentError);
}

TEST(GeoConvBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(59);
  const auto spec = tiny_spec(3, 2, 3, 0.6);
  const auto pts = orc::random_points(12, 0.5, rng);
  const auto x = orc::random_matrix(12, 3, rng);
  const auto p = orc::random_params(spec, rng);
  const auto out = geoconv_forward(x, build_neighborhoods(pts, 0.6), p, spec, Mode::kTrain);
  const auto g = geoconv_backward(out.cache, p, Matrix<double>(12, 3));
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (const auto& w : g.params.direction_weights) {
    for (double v : w.values()) EXPECT_EQ(v, 0.0);
  }
  for (double v : g.params.center_weight.values()) EXPECT_EQ(v, 0.0);
}

TEST(GeoConvBackward, UnselectedBasisHasZeroGradient) {
  // A planar cloud: every edge has z = 0, which selects +z, so -z is never used.
  Rng rng(60);
  const auto spec = tiny_spec(2, 2, 2, 1.0);
  std::vector<Point3> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({static_cast<float>(rng.uniform(-0.3, 0.3)), static_cast<float>(rng.uniform(-0.3, 0.3)), 0.0f});
  const auto x = orc::random_matrix(6, 2, rng);
  const auto p = orc::random_params(spec, rng);
  const auto out = geoconv_forward(x, build_neighborhoods(pts, 1.0), p, spec, Mode::kTrain);
  const auto g = geoconv_backward(out.cache, p, orc::random_matrix(6, 2, rng));
  for (double v : g.params.direction_weights[kNegZ].values()) EXPECT_EQ(v, 0.0);
  double other = 0.0;
  for (double v : g.params.direction_weights[kPosX].values()) other += std::abs(v);
  EXPECT_GT(other, 0.0);
}

TEST(MultiView, IdentityViewIsBitwiseEqual) {
  Rng rng(61);
  auto spec = tiny_spec(4, 3, 5, 0.4);
  const auto pts = orc::random_points(60, 0.5, rng);
  const auto x = orc::random_matrix(60, 4, rng).cast<float>();
  Rng prng(62);
  auto p = GeoConvParams<float>::init(spec, prng);
  auto mv_spec = spec;
  mv_spec.views = 1;
  auto pm = p;
  pm.view_weights = Matrix<float>(1, 1, 1.0f);
  const auto nbrs = build_neighborhoods(pts, 0.4);
  const auto a = geoconv_forward(x, nbrs, p, spec, Mode::kTrain);
  const auto b = geoconv_forward_multiview(x, nbrs, pm, mv_spec, MultiViewConfig{{0.0}}, Mode::kTrain);
  EXPECT_EQ(std::memcmp(a.output.data(), b.output.data(), a.output.size() * sizeof(float)), 0);
}

TEST(MultiView, AntipodalViewsSplitCoefficients) {
  NeighborhoodSet nbrs;
  nbrs.radius = 1.0;
  NeighborList l0;
  l0.indices = {1};
  l0.edges = {{1, 0, 0}};
  l0.distances = {0.5};
  nbrs.lists = {l0, NeighborList{}};
  const auto table = apply_views(build_edge_table(nbrs, EdgeFusion::kDecomposed),
                                 MultiViewConfig{{0.0, std::numbers::pi}}, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(table.coefficients[kPosX], 0.5, 1e-15);
  EXPECT_NEAR(table.coefficients[kNegX], 0.5, 1e-15);
  EXPECT_NEAR(table.coefficients[kPosY] + table.coefficients[kNegY] + table.coefficients[kPosZ] +
                  table.coefficients[kNegZ],
              0.0, 1e-15);
}

TEST(MultiView, SingleViewEqualsRotatedInput) {
  Rng rng(63);
  auto spec = tiny_spec(3, 2, 4, 0.5);
  const auto pts = orc::random_points(50, 0.6, rng);
  const auto x = orc::random_matrix(50, 3, rng);
  const auto p = orc::random_params(spec, rng);
  auto mv_spec = spec;
  mv_spec.views = 1;
  auto pm = p;
  pm.view_weights = Matrix<double>(1, 1, 1.0);
  std::vector<float> flat;
  for (const auto& q : pts) flat.insert(flat.end(), q.begin(), q.end());
  const PointCloud cloud(pts.size(), 3, flat);
  for (int t = 0; t < 8; ++t) {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto rotated = rotate_z(cloud, a).positions();
    const auto ref = geoconv_forward(x, build_neighborhoods(rotated, 0.5), p, spec, Mode::kEval);
    const auto got = geoconv_forward_multiview(x, build_neighborhoods(pts, 0.5), pm, mv_spec,
                                               MultiViewConfig{{a}}, Mode::kEval);
    for (std::size_t i = 0; i < ref.output.size(); ++i) EXPECT_NEAR(ref.output[i], got.output[i], 1e-5);
  }
}

TEST(MultiView, MatchesLiteralEvaluator) {
  Rng rng(64);
  int done = 0;
  while (done < 15) {
    const std::size_t n = 4 + rng.below(6);
    auto spec = tiny_spec(2, 2, 3, 0.8);
    spec.views = 1 + rng.below(4);
    orc::LayerInput in;
    in.positions = orc::random_points(n, 0.5, rng);
    in.radius = spec.radius;
    const auto nbrs = build_neighborhoods(in.positions, spec.radius);
    if (active_points(nbrs) < 2) continue;
    const auto x = orc::random_matrix(n, 2, rng);
    in.x = orc::to_dmat(x);
    auto p = orc::random_params(spec, rng);
    p.view_weights = orc::random_matrix(1, spec.views, rng, 0.1, 1.0);
    MultiViewConfig mv;
    for (std::size_t v = 0; v < spec.views; ++v) {
      mv.angles.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      in.angles.push_back(mv.angles.back());
      in.view_weights.push_back(p.view_weights[v]);
    }
    const auto got = geoconv_forward_multiview(x, nbrs, p, spec, mv, Mode::kTrain);
    EXPECT_LT(orc::max_abs_diff(got.output, orc::geoconv(in, p)), 1e-10);
    ++done;
  }
}

TEST(MultiView, UniformAnglesAndValidation) {
  const auto mv = MultiViewConfig::uniform(4);
  ASSERT_EQ(mv.angles.size(), 4u);
  EXPECT_NEAR(mv.angles[1], std::numbers::pi / 2, 1e-15);
  EXPECT_THROW(MultiViewConfig::uniform(0), ArgumentError);
  EXPECT_THROW((MultiViewConfig{{7.0}}.validate()), ArgumentError);
  Rng rng(65);
  auto spec = tiny_spec(2, 2, 2, 0.5);
  spec.views = 3;
  EXPECT_NEAR(GeoConvParams<double>::init(spec, rng).view_weights[2], 1.0 / 3.0, 1e-15);
}

TEST(Baseline, MatchesLiteralEvaluator) {
  Rng rng(66);
  int done = 0;
  while (done < 20) {
    const std::size_t n = 3 + rng.below(8);
    auto spec = tiny_spec(3, 2, 2, 0.7);
    spec.fusion = EdgeFusion::kAverage;
    orc::LayerInput in;
    in.positions = orc::random_points(n, 0.5, rng);
    in.radius = spec.radius;
    in.baseline = true;
    const auto nbrs = build_neighborhoods(in.positions, spec.radius);
    if (active_points(nbrs) < 2) continue;
    const auto x = orc::random_matrix(n, 3, rng);
    in.x = orc::to_dmat(x);
    const auto p = orc::random_params(spec, rng);
    ASSERT_EQ(p.direction_weights.size(), 1u);
    const auto got = baseline_edge_forward(x, nbrs, p, spec, Mode::kTrain);
    EXPECT_LT(orc::max_abs_diff(got.output, orc::geoconv(in, p)), 1e-10);
    ++done;
  }
}

TEST(Baseline, MeanIgnoresDistance) {
  auto spec = tiny_spec(1, 1, 1, 1.0);
  spec.fusion = EdgeFusion::kAverage;
  spec.bias = false;
  spec.reduction_norm = false;
  Rng rng(67);
  auto p = GeoConvParams<double>::init(spec, rng);
  p.center_weight.fill(0.0);
  p.direction_weights[0].fill(1.0);
  p.expand_weight.fill(1.0);
  const std::vector<Point3> pts = {{0, 0, 0}, {0.1f, 0, 0}, {0, 0.9f, 0}};
  const Matrix<double> x(3, 1, {0.0, 2.0, 4.0});
  const auto out = baseline_edge_forward(x, build_neighborhoods(pts, 1.0), p, spec, Mode::kEval);
  EXPECT_DOUBLE_EQ(out.output(0, 0), 3.0);
  auto decomposed = spec;
  decomposed.fusion = EdgeFusion::kDecomposed;
  EXPECT_THROW(baseline_edge_forward(x, build_neighborhoods(pts, 1.0), p, decomposed, Mode::kEval),
               ArgumentError);
}

TEST(ReductionCount, ClosedForm) {
  Rng rng(68);
  auto spec = tiny_spec(64, 64, 128, 0.15);
  EXPECT_EQ(GeoConvParams<float>::init(spec, rng).reduction_parameter_count(), 64u * 6 * 64 + 64 * 128);
  spec.fusion = EdgeFusion::kAverage;
  EXPECT_EQ(GeoConvParams<float>::init(spec, rng).reduction_parameter_count(), 64u * 64 + 64 * 128);
}
