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

#include "geocnn/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "geocnn/error.hpp"
#include "geocnn/geoconv.hpp"
#include "geocnn/pointcloud.hpp"
#include "geocnn/rng.hpp"
#include "geocnn/tensor.hpp"

namespace geocnn {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

bool GradCheckReport::passed() const {
  if (entries.empty()) return false;
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::table() const {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-34s %8s %12s %12s %s\n", "scope", "tensor", "count",
                "max_rel", "max_abs", "status");
  s += buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-10s %-34s %8zu %12.3e %12.3e %s\n", e.scope.c_str(),
                  e.name.c_str(), e.count, e.max_rel_error, e.max_abs_error,
                  e.pass ? "ok" : "FAIL");
    s += buf;
  }
  return s;
}

template <typename T>
std::vector<GradCheckEntry> check_gradients(const std::string& scope,
                                            const std::vector<BasicGradTarget<T>>& targets,
                                            const std::function<T()>& loss, double tolerance,
                                            double h) {
  std::vector<GradCheckEntry> out;
  for (const auto& t : targets) {
    if (t.values.size() != t.analytic.size()) {
      throw ArgumentError("check_gradients: '" + t.name + "' analytic size mismatch");
    }
    GradCheckEntry e{scope, t.name, t.values.size(), 0.0, 0.0, true};
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const T saved = t.values[i];
      const T step = static_cast<T>(h);
      t.values[i] = saved + step;
      const T up = loss();
      t.values[i] = saved - step;
      const T down = loss();
      t.values[i] = saved;
      const auto numeric = static_cast<double>((up - down) / (T{2} * step));
      e.max_rel_error = std::max(e.max_rel_error, relative_error(t.analytic[i], numeric));
      e.max_abs_error = std::max(e.max_abs_error, std::abs(t.analytic[i] - numeric));
    }
    e.pass = e.max_rel_error < tolerance;
    out.push_back(std::move(e));
  }
  return out;
}

template std::vector<GradCheckEntry> check_gradients(const std::string&,
                                                     const std::vector<BasicGradTarget<double>>&,
                                                     const std::function<double()>&, double,
                                                     double);
template std::vector<GradCheckEntry> check_gradients(
    const std::string&, const std::vector<BasicGradTarget<long double>>&,
    const std::function<long double()>&, double, double);

std::optional<GradScope> parse_grad_scope(std::string_view name) {
  if (name == "ops") return GradScope::kOps;
  if (name == "geoconv") return GradScope::kGeoConv;
  if (name == "full_model" || name == "full-model") return GradScope::kFullModel;
  return std::nullopt;
}

std::string_view grad_scope_name(GradScope scope) {
  switch (scope) {
    case GradScope::kOps: return "ops";
    case GradScope::kGeoConv: return "geoconv";
    case GradScope::kFullModel: return "full_model";
  }
  return "?";
}

namespace {

using MatD = Matrix<double>;

MatD random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  MatD m(r, c);
  for (auto& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

/// Values bounded away from zero (ReLU kinks).
MatD random_signed_away(std::size_t r, std::size_t c, Rng& rng) {
  MatD m(r, c);
  for (auto& v : m.values()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

double probe(const MatD& y, const MatD& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

GradTarget target(const std::string& name, MatD& values, const MatD& grad) {
  return {name, values.values(), grad.values()};
}

void append(GradCheckReport& report, std::vector<GradCheckEntry> entries) {
  for (auto& e : entries) report.entries.push_back(std::move(e));
}

void ops_suite(GradCheckReport& report, Rng& rng) {
  const double tol = report.tolerance;
  {
    MatD x = random_matrix(5, 4, rng), w = random_matrix(4, 3, rng), b = random_matrix(1, 3, rng);
    const MatD r = random_matrix(5, 3, rng);
    const auto g = linear_backward(x, w, true, r);
    auto loss = [&] { return probe(linear_forward(x, w, b), r); };
    append(report, check_gradients("ops", {target("linear.input", x, g.input),
                                           target("linear.weight", w, g.weight),
                                           target("linear.bias", b, g.bias)},
                                   loss, tol));
  }
  {
    MatD x = random_signed_away(6, 5, rng);
    const MatD r = random_matrix(6, 5, rng);
    const MatD g = relu_backward(x, r);
    auto loss = [&] { return probe(relu_forward(x), r); };
    append(report, check_gradients("ops", {target("relu.input", x, g)}, loss, tol));
  }
  for (int variant = 0; variant < 3; ++variant) {
    const char* name = variant == 0 ? "batchnorm" : variant == 1 ? "batchnorm_masked" : "batchnorm_eval";
    const Mode mode = variant == 2 ? Mode::kEval : Mode::kTrain;
    MatD x = random_matrix(7, 4, rng, -2.0, 2.0);
    BatchNormParams<double> p = BatchNormParams<double>::identity(4);
    p.gamma = random_matrix(1, 4, rng, 0.5, 1.5);
    p.beta = random_matrix(1, 4, rng);
    p.running_mean = random_matrix(1, 4, rng);
    p.running_var = random_matrix(1, 4, rng, 0.5, 2.0);
    std::vector<std::uint8_t> mask;
    if (variant == 1) mask = {1, 0, 1, 1, 0, 1, 1};
    const MatD r = random_matrix(7, 4, rng);
    BatchNormCache<double> cache;
    batchnorm_forward(x, p, mode, cache, mask);
    const auto g = batchnorm_backward(cache, p, r);
    auto loss = [&] {
      BatchNormCache<double> c;
      return probe(batchnorm_forward(x, p, mode, c, mask), r);
    };
    const std::string pre = name;
    append(report, check_gradients("ops", {target(pre + ".input", x, g.input),
                                           target(pre + ".gamma", p.gamma, g.gamma),
                                           target(pre + ".beta", p.beta, g.beta)},
                                   loss, tol));
  }
  {
    // A permutation of well-separated values keeps every maximum unique.
    MatD x(8, 3);
    std::vector<double> vals(x.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = -1.0 + 0.1 * static_cast<double>(i);
    shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), x.values().begin());
    const MatD r = random_matrix(2, 3, rng);
    const auto fwd = segment_maxpool_forward(x, 4);
    const MatD g = segment_maxpool_backward(fwd, 8, r);
    auto loss = [&] { return probe(segment_maxpool_forward(x, 4).output, r); };
    append(report, check_gradients("ops", {target("maxpool.input", x, g)}, loss, tol));
  }
  {
    MatD z = random_matrix(1, 5, rng, -2.0, 2.0);
    const auto res = softmax_cross_entropy<double>(z.values(), 2);
    auto loss = [&] { return softmax_cross_entropy<double>(z.values(), 2).loss; };
    append(report, check_gradients("ops", {target("softmax_ce.logits", z, res.grad)}, loss, tol));
  }
  {
    MatD z = random_matrix(3, 4, rng, -2.0, 2.0);
    const std::vector<std::size_t> labels{0, 3, 1};
    const auto res = softmax_cross_entropy_batch(z, labels);
    auto loss = [&] { return softmax_cross_entropy_batch(z, labels).loss; };
    append(report,
           check_gradients("ops", {target("softmax_ce_batch.logits", z, res.grad)}, loss, tol));
  }
}

struct GeoConvInstance {
  std::vector<Point3> positions;
  NeighborhoodSet nbrs;
  MatD x;
};

GeoConvInstance random_geoconv_instance(std::size_t n, std::size_t cin, double r, Rng& rng) {
  GeoConvInstance inst;
  for (std::size_t i = 0; i < n; ++i) {
    inst.positions.push_back({static_cast<float>(rng.uniform(-0.5, 0.5)),
                              static_cast<float>(rng.uniform(-0.5, 0.5)),
                              static_cast<float>(rng.uniform(-0.5, 0.5))});
  }
  inst.nbrs = build_neighborhoods(inst.positions, r, std::nullopt);
  inst.x = random_matrix(n, cin, rng);
  return inst;
}

template <typename T>
double matrix_margin(const Matrix<T>& pre, const std::vector<std::uint8_t>& active = {}) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < pre.rows(); ++r) {
    if (!active.empty() && !active[r]) continue;
    for (T v : pre.row(r)) m = std::min(m, std::abs(static_cast<double>(v)));
  }
  return m;
}

void geoconv_suite(GradCheckReport& report, Rng& rng) {
  struct Variant {
    const char* name;
    EdgeFusion fusion;
    std::size_t views;
    Mode mode;
  };
  const Variant variants[] = {
      {"geoconv", EdgeFusion::kDecomposed, 0, Mode::kTrain},
      {"geoconv_eval", EdgeFusion::kDecomposed, 0, Mode::kEval},
      {"baseline", EdgeFusion::kAverage, 0, Mode::kTrain},
      {"multiview", EdgeFusion::kDecomposed, 3, Mode::kTrain},
  };
  for (const auto& v : variants) {
    GeoConvSpec spec;
    spec.in_channels = 3;
    spec.reduction_channels = 2;
    spec.out_channels = 4;
    spec.radius = 0.6;
    spec.fusion = v.fusion;
    spec.views = v.views;
    MultiViewConfig mv;
    if (v.views > 0) {
      for (std::size_t i = 0; i < v.views; ++i) mv.angles.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }

    GeoConvInstance inst;
    GeoConvParams<double> params;
    MatD probe_r;
    auto run = [&](const MatD& x, const GeoConvParams<double>& p) {
      return v.views > 0 ? geoconv_forward_multiview(x, inst.nbrs, p, spec, mv, v.mode)
                         : geoconv_forward(x, inst.nbrs, p, spec, v.mode);
    };
    // Redraw until every active point has neighbors and no ReLU input sits
    // near its kink.
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == 100) throw Error("gradcheck: no kink-free GeoConv instance found");
      inst = random_geoconv_instance(8, spec.in_channels, spec.radius, rng);
      params = GeoConvParams<double>::init(spec, rng);
      params.center_bias = random_matrix(1, spec.out_channels, rng);
      params.expand_bias = random_matrix(1, spec.out_channels, rng);
      params.norm.gamma = random_matrix(1, spec.reduction_channels, rng, 0.5, 1.5);
      params.norm.beta = random_matrix(1, spec.reduction_channels, rng, -0.5, 0.5);
      params.norm.running_mean = random_matrix(1, spec.reduction_channels, rng, -0.2, 0.2);
      params.norm.running_var = random_matrix(1, spec.reduction_channels, rng, 0.5, 1.5);
      if (v.views > 0) params.view_weights = random_matrix(1, v.views, rng, 0.2, 1.0);
      const auto out = run(inst.x, params);
      std::size_t active = 0;
      for (auto a : out.cache.table.active) active += a;
      if (active < 3) continue;
      if (matrix_margin(out.cache.normalized, out.cache.table.active) > 1e-3) break;
    }
    if (attempt > 0) {
      report.notes.push_back(std::string(v.name) + ": redrew instance " + std::to_string(attempt) +
                             " time(s) to avoid ReLU kinks");
    }
    probe_r = random_matrix(inst.x.rows(), spec.out_channels, rng);
    const auto fwd = run(inst.x, params);
    const auto g = geoconv_backward(fwd.cache, params, probe_r);

    std::vector<GradTarget> targets;
    const std::string pre = v.name;
    targets.push_back(target(pre + ".input", inst.x, g.input));
    targets.push_back(target(pre + ".center_weight", params.center_weight, g.params.center_weight));
    targets.push_back(target(pre + ".center_bias", params.center_bias, g.params.center_bias));
    for (std::size_t b = 0; b < params.direction_weights.size(); ++b) {
      targets.push_back(target(pre + ".direction" + std::to_string(b), params.direction_weights[b],
                               g.params.direction_weights[b]));
    }
    targets.push_back(target(pre + ".expand_weight", params.expand_weight, g.params.expand_weight));
    targets.push_back(target(pre + ".expand_bias", params.expand_bias, g.params.expand_bias));
    targets.push_back(target(pre + ".norm.gamma", params.norm.gamma, g.params.norm.gamma));
    targets.push_back(target(pre + ".norm.beta", params.norm.beta, g.params.norm.beta));
    if (v.views > 0) {
      targets.push_back(target(pre + ".view_weights", params.view_weights, g.params.view_weights));
    }
    auto loss = [&] { return probe(run(inst.x, params).output, probe_r); };
    append(report, check_gradients("geoconv", targets, loss, report.tolerance));
  }
}

// Batch norm over two rows maps every input to +-1, which starves the layers
// below the head of gradient; four rows keep the check informative.
constexpr std::size_t kMicroBatch = 4;

std::vector<PointCloud> micro_batch(const GeoCnnConfig& cfg, std::uint64_t seed) {
  std::vector<PointCloud> clouds;
  for (std::size_t b = 0; b < kMicroBatch; ++b) {
    const ShapeKind kind = kAllShapes[b % kAllShapes.size()];
    const PointCloud dense = synth_shape(kind, 32, 0.02, mix_seed(seed, b));
    clouds.push_back(normalize_unit_sphere(sample_points(dense, cfg.n_points, mix_seed(seed, b + 100))));
    clouds.back().set_label(static_cast<int>(b % cfg.num_classes));
  }
  return clouds;
}

void full_model_suite(GradCheckReport& report, std::uint64_t seed) {
  GeoCnnConfig cfg = GeoCnnConfig::micro();
  std::vector<PointCloud> clouds;
  std::optional<Model<double>> model;
  int attempt = 0;
  for (;; ++attempt) {
    if (attempt == 200) throw Error("gradcheck: no kink-free micro model instance found");
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(attempt));
    model.emplace(cfg);
    clouds = micro_batch(cfg, cfg.seed);
    const auto pass = forward_batch(*model, std::span<const PointCloud>(clouds), Mode::kTrain);
    if (kink_margin(pass) > 1e-4) break;
  }
  if (attempt > 0) {
    report.notes.push_back("full_model: redrew model/batch " + std::to_string(attempt) +
                           " time(s) to avoid ReLU and max-pool kinks");
  }
  std::vector<const PointCloud*> ptrs;
  for (const auto& c : clouds) ptrs.push_back(&c);
  std::vector<std::size_t> labels;
  for (const auto& c : clouds) labels.push_back(static_cast<std::size_t>(*c.label()));
  const auto res = forward_backward_batch(*model, std::span<const PointCloud* const>(ptrs),
                                          std::span<const std::size_t>(labels), Mode::kTrain);
  Model<long double> wide = model->cast<long double>();
  auto params = named_tensors(wide.params());
  const auto grads = named_tensors(res.grads);
  std::vector<BasicGradTarget<long double>> targets;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].role != TensorRole::kTrainable) continue;
    targets.push_back({params[i].name, params[i].value->values(), grads[i].value->values()});
  }
  std::function<long double()> loss = [&] {
    const auto pass = forward_batch(wide, std::span<const PointCloud* const>(ptrs), Mode::kTrain);
    return softmax_cross_entropy_batch(pass.logits, labels).loss;
  };
  append(report, check_gradients("full_model", targets, loss, report.tolerance));
}

}  // namespace

namespace {

template <typename T>
double pool_gap(const Matrix<T>& pre_relu, std::size_t group) {
  double m = std::numeric_limits<double>::infinity();
  const std::size_t groups = pre_relu.rows() / group;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < pre_relu.cols(); ++c) {
      double best = -std::numeric_limits<double>::infinity();
      double second = best;
      for (std::size_t r = g * group; r < (g + 1) * group; ++r) {
        const double v = std::max<double>(pre_relu(r, c), 0.0);
        if (v > best) {
          second = best;
          best = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (best > 0.0) m = std::min(m, best - second);
    }
  }
  return m;
}

}  // namespace

template <typename T>
double kink_margin(const ForwardPass<T>& pass) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& g : pass.group) m = std::min(m, matrix_margin(g.normalized));
  m = std::min(m, matrix_margin(pass.stem.normalized));
  for (std::size_t i = 0; i < 3; ++i) {
    m = std::min(m, matrix_margin(pass.conv[i].normalized, pass.conv[i].table.active));
    m = std::min(m, matrix_margin(pass.conv_normalized[i]));
  }
  m = std::min(m, matrix_margin(pass.mid.normalized));
  m = std::min(m, matrix_margin(pass.final.normalized));
  for (const auto& h : pass.head) m = std::min(m, matrix_margin(h.normalized));
  if (!pass.group.empty()) {
    m = std::min(m, pool_gap(pass.group.back().normalized, pass.group_members.size() /
                                                                (pass.clouds * pass.points)));
  }
  m = std::min(m, pool_gap(pass.final.normalized, pass.points));
  return m;
}

template double kink_margin(const ForwardPass<float>&);
template double kink_margin(const ForwardPass<double>&);

GradCheckReport gradcheck_suite(GradScope scope, std::uint64_t seed, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  const auto start = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(scope)));
  switch (scope) {
    case GradScope::kOps: ops_suite(report, rng); break;
    case GradScope::kGeoConv: geoconv_suite(report, rng); break;
    case GradScope::kFullModel: full_model_suite(report, seed); break;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace geocnn
