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

// Independent reference implementations used only by tests. None of these
// call into the library kernels they are compared against.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "geocnn/geoconv.hpp"
#include "geocnn/pointcloud.hpp"
#include "geocnn/rng.hpp"
#include "geocnn/tensor.hpp"

namespace geocnn::oracle {

using DMat = std::vector<std::vector<double>>;

inline double dist2(const Point3& a, const Point3& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = static_cast<double>(b[k]) - static_cast<double>(a[k]);
    s += d * d;
  }
  return s;
}

/// Every j with 0 < |p_j - p_c| <= r, scanning all points.
inline std::vector<std::uint32_t> ball(const std::vector<Point3>& pts, std::size_t c, double r) {
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j == c) continue;
    const double d = std::sqrt(dist2(pts[c], pts[j]));
    if (d > 0.0 && d <= r) out.push_back(static_cast<std::uint32_t>(j));
  }
  return out;
}

/// Ball capped at the `cap` nearest, ties to the lower index; result sorted by index.
inline std::vector<std::uint32_t> ball_capped(const std::vector<Point3>& pts, std::size_t c,
                                              double r, std::size_t cap) {
  auto all = ball(pts, c, r);
  std::vector<std::pair<double, std::uint32_t>> keyed;
  for (auto j : all) keyed.push_back({std::sqrt(dist2(pts[c], pts[j])), j});
  std::sort(keyed.begin(), keyed.end());
  if (keyed.size() > cap) keyed.resize(cap);
  std::vector<std::uint32_t> out;
  for (auto& [d, j] : keyed) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

/// k nearest by (distance, index), center excluded when n > k. With n <= k
/// all points are ranked and the list cycles from the nearest.
inline std::vector<std::uint32_t> knn(const std::vector<Point3>& pts, std::size_t c, std::size_t k) {
  std::vector<std::pair<double, std::uint32_t>> keyed;
  const bool with_center = pts.size() <= k;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j == c && !with_center) continue;
    keyed.push_back({dist2(pts[c], pts[j]), static_cast<std::uint32_t>(j)});
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(keyed[i % keyed.size()].second);
  return out;
}

inline DMat to_dmat(const Matrix<double>& m) {
  DMat out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

inline std::vector<double> vec_mat(const std::vector<double>& x, const DMat& w) {
  std::vector<double> y(w.empty() ? 0 : w[0].size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[i] * w[i][j];
  }
  return y;
}

/// Literal GeoConv layer: for every edge, pick one basis per axis by the sign
/// of that component, weight W_b x_q by cos^2 to the basis, average with
/// (r - dist)^2 weights, batch-normalize over active points, ReLU, expand and
/// add the center term. `angles` non-empty switches to the weighted sum of
/// per-view decompositions of the rotated edge. Baseline uses a single
/// matrix and the plain neighbor mean.
struct LayerInput {
  std::vector<Point3> positions;
  DMat x;
  double radius = 0.0;
  bool baseline = false;
  bool train = true;
  bool bias = true;
  std::vector<double> angles;
  std::vector<double> view_weights;
};

inline DMat geoconv(const LayerInput& in, const GeoConvParams<double>& p) {
  const std::size_t n = in.positions.size();
  const std::size_t cr = p.expand_weight.rows();
  const std::size_t co = p.expand_weight.cols();
  std::vector<DMat> wb;
  for (const auto& w : p.direction_weights) wb.push_back(to_dmat(w));
  const DMat wc = to_dmat(p.center_weight);
  const DMat we = to_dmat(p.expand_weight);

  auto basis_of = [](int axis, double comp) { return 2 * axis + (comp >= 0.0 ? 0 : 1); };

  DMat agg(n, std::vector<double>(cr, 0.0));
  std::vector<bool> active(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    const auto nb = ball(in.positions, c, in.radius);
    if (nb.empty()) continue;
    std::vector<double> weight;
    double total = 0.0;
    for (auto q : nb) {
      const double d = std::sqrt(dist2(in.positions[c], in.positions[q]));
      const double w = in.baseline ? 1.0 : (in.radius - d) * (in.radius - d);
      weight.push_back(w);
      total += w;
    }
    if (total <= 0.0) continue;
    active[c] = true;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const std::uint32_t q = nb[i];
      std::vector<double> g(cr, 0.0);
      if (in.baseline) {
        g = vec_mat(in.x[q], wb[0]);
      } else {
        std::array<double, 3> e{};
        for (int k = 0; k < 3; ++k) {
          e[k] = static_cast<double>(in.positions[q][k]) - static_cast<double>(in.positions[c][k]);
        }
        std::vector<std::pair<std::array<double, 3>, double>> views;
        if (in.angles.empty()) {
          views.push_back({e, 1.0});
        } else {
          for (std::size_t v = 0; v < in.angles.size(); ++v) {
            const double ca = std::cos(in.angles[v]), sa = std::sin(in.angles[v]);
            views.push_back({{ca * e[0] - sa * e[1], sa * e[0] + ca * e[1], e[2]}, in.view_weights[v]});
          }
        }
        for (const auto& [ev, vw] : views) {
          const double len2 = ev[0] * ev[0] + ev[1] * ev[1] + ev[2] * ev[2];
          for (int k = 0; k < 3; ++k) {
            const double cos2 = ev[k] * ev[k] / len2;
            const auto z = vec_mat(in.x[q], wb[static_cast<std::size_t>(basis_of(k, ev[k]))]);
            for (std::size_t j = 0; j < cr; ++j) g[j] += vw * cos2 * z[j];
          }
        }
      }
      for (std::size_t j = 0; j < cr; ++j) agg[c][j] += weight[i] / total * g[j];
    }
  }

  std::vector<double> mean(cr, 0.0), var(cr, 0.0);
  if (in.train) {
    std::size_t m = 0;
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c]) continue;
      ++m;
      for (std::size_t j = 0; j < cr; ++j) mean[j] += agg[c][j];
    }
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c]) continue;
      for (std::size_t j = 0; j < cr; ++j) var[j] += (agg[c][j] - mean[j]) * (agg[c][j] - mean[j]);
    }
    for (auto& v : var) v /= static_cast<double>(m);
  } else {
    for (std::size_t j = 0; j < cr; ++j) {
      mean[j] = p.norm.running_mean[j];
      var[j] = p.norm.running_var[j];
    }
  }

  DMat y(n, std::vector<double>(co, 0.0));
  for (std::size_t c = 0; c < n; ++c) {
    y[c] = vec_mat(in.x[c], wc);
    if (in.bias) {
      for (std::size_t j = 0; j < co; ++j) y[c][j] += p.center_bias[j];
    }
    if (!active[c]) continue;
    std::vector<double> h(cr);
    for (std::size_t j = 0; j < cr; ++j) {
      const double z = (agg[c][j] - mean[j]) / std::sqrt(var[j] + 1e-5);
      h[j] = std::max(0.0, p.norm.gamma[j] * z + p.norm.beta[j]);
    }
    const auto ex = vec_mat(h, we);
    for (std::size_t j = 0; j < co; ++j) y[c][j] += ex[j] + (in.bias ? p.expand_bias[j] : 0.0);
  }
  return y;
}

/// Uniform points in a cube of half-width `half`.
inline std::vector<Point3> random_points(std::size_t n, double half, Rng& rng) {
  std::vector<Point3> pts(n);
  for (auto& p : pts) {
    for (auto& v : p) v = static_cast<float>(rng.uniform(-half, half));
  }
  return pts;
}

inline Matrix<double> random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Matrix<double> m(r, c);
  for (auto& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

/// Parameters with random biases and batch-norm state so no term is trivially zero.
inline GeoConvParams<double> random_params(const GeoConvSpec& spec, Rng& rng) {
  auto p = GeoConvParams<double>::init(spec, rng);
  if (spec.bias) {
    p.center_bias = random_matrix(1, spec.out_channels, rng);
    p.expand_bias = random_matrix(1, spec.out_channels, rng);
  }
  p.norm.gamma = random_matrix(1, spec.reduction_channels, rng, 0.5, 1.5);
  p.norm.beta = random_matrix(1, spec.reduction_channels, rng, -0.5, 0.5);
  p.norm.running_mean = random_matrix(1, spec.reduction_channels, rng, -0.2, 0.2);
  p.norm.running_var = random_matrix(1, spec.reduction_channels, rng, 0.5, 2.0);
  return p;
}

inline double max_abs_diff(const Matrix<double>& a, const DMat& b) {
  double m = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) m = std::max(m, std::abs(a(r, c) - b[r][c]));
  }
  return m;
}

}  // namespace geocnn::oracle
