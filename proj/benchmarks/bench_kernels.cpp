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

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "geocnn/geoconv.hpp"
#include "geocnn/model.hpp"
#include "geocnn/rng.hpp"
#include "geocnn/spatial.hpp"

using namespace geocnn;

namespace {

std::vector<Point3> uniform_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point3> pos(n);
  for (auto& p : pos) {
    for (auto& v : p) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return pos;
}

struct LayerFixture {
  GeoConvSpec spec;
  std::vector<Point3> pos;
  Matrix<float> x;
  GeoConvParams<float> params;
  NeighborhoodSet nbrs;

  LayerFixture(std::size_t n, std::size_t cin, std::size_t cr, std::size_t cout, double r) {
    spec.in_channels = cin;
    spec.reduction_channels = cr;
    spec.out_channels = cout;
    spec.radius = r;
    pos = uniform_points(n, 1);
    Rng rng(2);
    params = GeoConvParams<float>::init(spec, rng);
    x = Matrix<float>(n, cin);
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    nbrs = build_neighborhoods(pos, r);
  }
};

}  // namespace

static void BM_BallQueryGrid(benchmark::State& state) {
  const auto pos = uniform_points(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(build_neighborhoods(pos, 0.15, std::nullopt));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BallQueryGrid)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

static void BM_BallQueryBrute(benchmark::State& state) {
  const auto pos = uniform_points(static_cast<std::size_t>(state.range(0)), 3);
  const double r2 = 0.15 * 0.15;
  for (auto _ : state) {
    std::size_t edges = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      for (std::size_t j = 0; j < pos.size(); ++j) {
        const double d2 = squared_distance(pos[i], pos[j]);
        if (i != j && d2 > 0.0 && d2 <= r2) ++edges;
      }
    }
    benchmark::DoNotOptimize(edges);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BallQueryBrute)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_GeoConvForward(benchmark::State& state) {
  const LayerFixture f(static_cast<std::size_t>(state.range(0)), 64, 64, 128, 0.15);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geoconv_forward(f.x, f.nbrs, f.params, f.spec, Mode::kTrain));
  }
}
BENCHMARK(BM_GeoConvForward)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_GeoConvBackward(benchmark::State& state) {
  const LayerFixture f(static_cast<std::size_t>(state.range(0)), 64, 64, 128, 0.15);
  const auto out = geoconv_forward(f.x, f.nbrs, f.params, f.spec, Mode::kTrain);
  Matrix<float> grad(f.x.rows(), f.spec.out_channels);
  Rng rng(4);
  for (auto& v : grad.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(geoconv_backward(out.cache, f.params, grad));
}
BENCHMARK(BM_GeoConvBackward)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_DeskTrainStep(benchmark::State& state) {
  auto cfg = GeoCnnConfig::desk();
  cfg.baseline = state.range(0) != 0;
  const Model<float> model(cfg);
  std::vector<PointCloud> clouds;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 8; ++i) {
    auto c = normalize_unit_sphere(synth_shape(kAllShapes[i % 4], cfg.n_points, 0.02, mix_seed(5, i)));
    clouds.push_back(std::move(c));
    labels.push_back(i % 4);
  }
  std::vector<const PointCloud*> batch;
  for (const auto& c : clouds) batch.push_back(&c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_backward_batch(model, std::span<const PointCloud* const>(batch),
                                                    std::span<const std::size_t>(labels), Mode::kTrain));
  }
}
BENCHMARK(BM_DeskTrainStep)->Arg(0)->Arg(1)->ArgName("baseline")->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
