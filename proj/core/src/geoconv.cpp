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

#include "geocnn/geoconv.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <string>

#include "geocnn/error.hpp"
#include "geocnn/parallel.hpp"

namespace geocnn {

QuadrantBases quadrant_bases(const Vec3& edge) {
  if (edge[0] == 0.0 && edge[1] == 0.0 && edge[2] == 0.0) {
    throw ArgumentError("quadrant_bases: zero edge vector has no direction");
  }
  QuadrantBases q{};
  for (int k = 0; k < 3; ++k) {
    q[k] = static_cast<std::uint8_t>(2 * k + (edge[k] >= 0.0 ? 0 : 1));
  }
  return q;
}

std::array<double, 3> decomposition_coefficients(const Vec3& edge, const QuadrantBases& bases) {
  const double sq = edge[0] * edge[0] + edge[1] * edge[1] + edge[2] * edge[2];
  if (!(sq > 0.0)) throw ArgumentError("decomposition_coefficients: zero edge vector");
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) {
    const Vec3& b = kBases[bases[k]];
    const double proj = edge[0] * b[0] + edge[1] * b[1] + edge[2] * b[2];
    assert(proj >= 0.0);  // selected bases point into the edge's quadrant
    c[k] = proj * proj / sq;
  }
  return c;
}

double distance_weight(double dist, double r) {
  if (dist > r) {
    throw ArgumentError("distance_weight: distance " + std::to_string(dist) +
                        " exceeds radius " + std::to_string(r));
  }
  const double gap = r - dist;
  return gap * gap;
}

EdgeGeometry edge_geometry(const Vec3& edge, double dist, double r) {
  EdgeGeometry g;
  g.bases = quadrant_bases(edge);
  g.coefficients = decomposition_coefficients(edge, g.bases);
  g.weight = distance_weight(dist, r);
  return g;
}

void GeoConvSpec::validate() const {
  if (in_channels == 0 || reduction_channels == 0 || out_channels == 0) {
    throw ConfigError("GeoConv channel counts must be positive");
  }
  if (!(radius > 0.0)) throw ConfigError("GeoConv radius must be positive");
  if (views > 0 && fusion != EdgeFusion::kDecomposed) {
    throw ConfigError("multi-view aggregation requires the decomposed edge fusion");
  }
}

MultiViewConfig MultiViewConfig::uniform(std::size_t views) {
  if (views == 0) throw ArgumentError("multi-view needs at least one view");
  MultiViewConfig mv;
  mv.angles.resize(views);
  for (std::size_t v = 0; v < views; ++v) {
    mv.angles[v] = 2.0 * std::numbers::pi * static_cast<double>(v) / static_cast<double>(views);
  }
  return mv;
}

void MultiViewConfig::validate() const {
  if (angles.empty()) throw ArgumentError("multi-view needs at least one view");
  for (double a : angles) {
    if (!(a >= 0.0 && a < 2.0 * std::numbers::pi)) {
      throw ArgumentError("view angle " + std::to_string(a) + " outside [0, 2*pi)");
    }
  }
}

namespace {

void require_shape(const char* what, std::size_t r, std::size_t c, std::size_t er, std::size_t ec) {
  if (r != er || c != ec) {
    throw ArgumentError(std::string("GeoConv ") + what + " has shape " + std::to_string(r) + "x" +
                        std::to_string(c) + ", expected " + std::to_string(er) + "x" +
                        std::to_string(ec));
  }
}

}  // namespace

template <typename T>
GeoConvParams<T> GeoConvParams<T>::init(const GeoConvSpec& spec, Rng& rng) {
  spec.validate();
  GeoConvParams p = zeros(spec);
  p.center_weight = glorot_uniform<T>(spec.in_channels, spec.out_channels, rng);
  for (auto& w : p.direction_weights) w = glorot_uniform<T>(spec.in_channels, spec.reduction_channels, rng);
  p.expand_weight = glorot_uniform<T>(spec.reduction_channels, spec.out_channels, rng);
  p.norm = BatchNormParams<T>::identity(spec.reduction_channels);
  if (spec.views > 0) p.view_weights.fill(static_cast<T>(1.0 / static_cast<double>(spec.views)));
  return p;
}

template <typename T>
GeoConvParams<T> GeoConvParams<T>::zeros(const GeoConvSpec& spec) {
  GeoConvParams p;
  p.center_weight = Matrix<T>(spec.in_channels, spec.out_channels);
  if (spec.bias) p.center_bias = Matrix<T>(1, spec.out_channels);
  p.direction_weights.assign(spec.num_bases(),
                             Matrix<T>(spec.in_channels, spec.reduction_channels));
  p.expand_weight = Matrix<T>(spec.reduction_channels, spec.out_channels);
  if (spec.bias) p.expand_bias = Matrix<T>(1, spec.out_channels);
  p.norm = {Matrix<T>(1, spec.reduction_channels), Matrix<T>(1, spec.reduction_channels),
            Matrix<T>(1, spec.reduction_channels), Matrix<T>(1, spec.reduction_channels)};
  if (spec.views > 0) p.view_weights = Matrix<T>(1, spec.views);
  return p;
}

template <typename T>
void GeoConvParams<T>::check_shapes(const GeoConvSpec& spec) const {
  const std::size_t cin = spec.in_channels, cr = spec.reduction_channels, co = spec.out_channels;
  require_shape("center weight", center_weight.rows(), center_weight.cols(), cin, co);
  if (spec.bias) {
    require_shape("center bias", center_bias.rows(), center_bias.cols(), 1, co);
    require_shape("expand bias", expand_bias.rows(), expand_bias.cols(), 1, co);
  } else if (!center_bias.empty() || !expand_bias.empty()) {
    throw ArgumentError("GeoConv biases present on a layer configured without bias");
  }
  if (direction_weights.size() != spec.num_bases()) {
    throw ArgumentError("GeoConv has " + std::to_string(direction_weights.size()) +
                        " direction matrices, expected " + std::to_string(spec.num_bases()));
  }
  for (const auto& w : direction_weights) require_shape("direction weight", w.rows(), w.cols(), cin, cr);
  require_shape("expand weight", expand_weight.rows(), expand_weight.cols(), cr, co);
  require_shape("norm gamma", norm.gamma.rows(), norm.gamma.cols(), 1, cr);
  if (spec.views > 0) {
    require_shape("view weights", view_weights.rows(), view_weights.cols(), 1, spec.views);
  }
}

template <typename T>
std::size_t GeoConvParams<T>::reduction_parameter_count() const {
  std::size_t total = expand_weight.size();
  for (const auto& w : direction_weights) total += w.size();
  return total;
}

EdgeTable build_edge_table(const NeighborhoodSet& nbrs, EdgeFusion fusion, double weight_scale) {
  if (!(weight_scale > 0.0)) throw ArgumentError("weight_scale must be positive");
  EdgeTable t;
  t.points = nbrs.size();
  t.bases = fusion == EdgeFusion::kDecomposed ? kNumBases : 1;
  const std::size_t edges = nbrs.edge_count();
  t.offsets.reserve(t.points + 1);
  t.sources.reserve(edges);
  t.targets.reserve(edges);
  t.weights.reserve(edges);
  t.coefficients.reserve(edges * t.bases);
  t.edges.reserve(edges);
  t.active.assign(t.points, 0);
  t.offsets.push_back(0);

  for (std::size_t p = 0; p < t.points; ++p) {
    const NeighborList& list = nbrs.lists[p];
    const std::size_t first = t.targets.size();
    double total = 0.0;
    for (std::size_t j = 0; j < list.size(); ++j) {
      const std::uint32_t q = list.indices[j];
      if (q >= t.points) throw ArgumentError("neighbor index out of range");
      t.sources.push_back(static_cast<std::uint32_t>(p));
      t.targets.push_back(q);
      t.edges.push_back(list.edges[j]);
      if (fusion == EdgeFusion::kDecomposed) {
        const EdgeGeometry g = edge_geometry(list.edges[j], list.distances[j], nbrs.radius);
        std::array<double, kNumBases> row{};
        for (int k = 0; k < 3; ++k) row[g.bases[k]] = g.coefficients[k];
        t.coefficients.insert(t.coefficients.end(), row.begin(), row.end());
        const double w = g.weight * weight_scale;
        t.weights.push_back(w);
        total += w;
      } else {
        t.coefficients.push_back(1.0);
        t.weights.push_back(1.0);
        total += 1.0;
      }
    }
    if (total > 0.0) {
      t.active[p] = 1;
      for (std::size_t e = first; e < t.targets.size(); ++e) t.weights[e] /= total;
    }
    t.offsets.push_back(static_cast<std::uint32_t>(t.targets.size()));
  }

  t.incoming_offsets.assign(t.points + 1, 0);
  for (std::uint32_t q : t.targets) ++t.incoming_offsets[q + 1];
  for (std::size_t p = 0; p < t.points; ++p) t.incoming_offsets[p + 1] += t.incoming_offsets[p];
  t.incoming.resize(t.targets.size());
  std::vector<std::uint32_t> cursor(t.incoming_offsets.begin(), t.incoming_offsets.end() - 1);
  for (std::size_t e = 0; e < t.targets.size(); ++e) {
    t.incoming[cursor[t.targets[e]]++] = static_cast<std::uint32_t>(e);
  }
  return t;
}

namespace {

/// Effective per-basis coefficients of one edge summed over weighted views.
std::array<double, kNumBases> view_coefficients(const Vec3& edge,
                                                const std::vector<double>& cosines,
                                                const std::vector<double>& sines,
                                                std::span<const double> view_weights) {
  std::array<double, kNumBases> acc{};
  for (std::size_t v = 0; v < cosines.size(); ++v) {
    const Vec3 rotated = rotate_edge_z(edge, cosines[v], sines[v]);
    const QuadrantBases qb = quadrant_bases(rotated);
    const auto c = decomposition_coefficients(rotated, qb);
    for (int k = 0; k < 3; ++k) acc[qb[k]] += view_weights[v] * c[k];
  }
  return acc;
}

void view_trig(const MultiViewConfig& views, std::vector<double>& cosines,
               std::vector<double>& sines) {
  cosines.resize(views.angles.size());
  sines.resize(views.angles.size());
  for (std::size_t v = 0; v < views.angles.size(); ++v) {
    cosines[v] = std::cos(views.angles[v]);
    sines[v] = std::sin(views.angles[v]);
  }
}

}  // namespace

EdgeTable apply_views(EdgeTable table, const MultiViewConfig& views,
                      std::span<const double> view_weights) {
  views.validate();
  if (table.bases != kNumBases) throw ArgumentError("multi-view requires decomposed edges");
  if (view_weights.size() != views.angles.size()) {
    throw ArgumentError("multi-view: " + std::to_string(view_weights.size()) + " weights for " +
                        std::to_string(views.angles.size()) + " views");
  }
  std::vector<double> cosines, sines;
  view_trig(views, cosines, sines);
  for (std::size_t e = 0; e < table.edge_count(); ++e) {
    const auto acc = view_coefficients(table.edges[e], cosines, sines, view_weights);
    std::copy(acc.begin(), acc.end(), table.coefficients.begin() + static_cast<std::ptrdiff_t>(e * kNumBases));
  }
  return table;
}

namespace {

template <typename T>
GeoConvOutput<T> forward_impl(const Matrix<T>& x, EdgeTable table, const GeoConvParams<T>& params,
                              const GeoConvSpec& spec, Mode mode, MultiViewConfig views) {
  spec.validate();
  params.check_shapes(spec);
  if (x.cols() != spec.in_channels) {
    throw ArgumentError("GeoConv input has " + std::to_string(x.cols()) + " channels, expected " +
                        std::to_string(spec.in_channels));
  }
  if (table.points != x.rows()) {
    throw ArgumentError("GeoConv neighborhoods cover " + std::to_string(table.points) +
                        " points, input has " + std::to_string(x.rows()));
  }
  if (table.bases != spec.num_bases()) {
    throw ArgumentError("GeoConv edge table fusion does not match the layer");
  }

  const std::size_t n = x.rows();
  const std::size_t cr = spec.reduction_channels;
  const std::size_t nb = spec.num_bases();

  GeoConvOutput<T> out;
  GeoConvCache<T>& cache = out.cache;
  cache.spec = spec;
  cache.mode = mode;
  cache.input = x;
  cache.views = std::move(views);

  cache.reduced.reserve(nb);
  for (std::size_t b = 0; b < nb; ++b) cache.reduced.push_back(matmul(x, params.direction_weights[b]));

  cache.aggregated = Matrix<T>(n, cr);
  parallel_for(0, n, [&](std::size_t p) {
    if (!table.active[p]) return;
    T* acc = cache.aggregated.data() + p * cr;
    for (std::uint32_t e = table.offsets[p]; e < table.offsets[p + 1]; ++e) {
      const std::uint32_t q = table.targets[e];
      const double w = table.weights[e];
      for (std::size_t b = 0; b < nb; ++b) {
        const double c = table.coefficients[e * nb + b];
        if (c == 0.0) continue;
        const T f = static_cast<T>(w * c);
        const T* z = cache.reduced[b].data() + q * cr;
        for (std::size_t k = 0; k < cr; ++k) acc[k] += f * z[k];
      }
    }
  });

  if (spec.reduction_norm) {
    cache.normalized = batchnorm_forward(cache.aggregated, params.norm, mode, cache.bn, table.active);
    cache.edge_feature = relu_forward(cache.normalized);
  } else {
    cache.edge_feature = cache.aggregated;
  }

  Matrix<T> y = linear_forward(x, params.center_weight, params.center_bias);
  const Matrix<T> expanded = matmul(cache.edge_feature, params.expand_weight);
  const std::size_t co = spec.out_channels;
  for (std::size_t p = 0; p < n; ++p) {
    if (!table.active[p]) continue;
    T* yr = y.data() + p * co;
    const T* er = expanded.data() + p * co;
    for (std::size_t k = 0; k < co; ++k) {
      yr[k] += spec.bias ? er[k] + params.expand_bias[k] : er[k];
    }
  }
  GEOCNN_DEBUG_FINITE(y);
  cache.table = std::move(table);
  out.output = std::move(y);
  return out;
}

}  // namespace

template <typename T>
GeoConvOutput<T> geoconv_forward(const Matrix<T>& x, EdgeTable table,
                                 const GeoConvParams<T>& params, const GeoConvSpec& spec,
                                 Mode mode) {
  if (spec.views > 0) {
    throw ArgumentError("layer is configured for multi-view; use geoconv_forward_multiview");
  }
  return forward_impl(x, std::move(table), params, spec, mode, {});
}

template <typename T>
GeoConvOutput<T> geoconv_forward(const Matrix<T>& x, const NeighborhoodSet& nbrs,
                                 const GeoConvParams<T>& params, const GeoConvSpec& spec,
                                 Mode mode) {
  if (std::abs(nbrs.radius - spec.radius) > 1e-12) {
    throw ArgumentError("neighborhoods were built with radius " + std::to_string(nbrs.radius) +
                        ", layer radius is " + std::to_string(spec.radius));
  }
  return geoconv_forward(x, build_edge_table(nbrs, spec.fusion), params, spec, mode);
}

template <typename T>
GeoConvOutput<T> geoconv_forward_multiview(const Matrix<T>& x, const NeighborhoodSet& nbrs,
                                           const GeoConvParams<T>& params,
                                           const GeoConvSpec& spec, const MultiViewConfig& views,
                                           Mode mode) {
  if (spec.views != views.angles.size()) {
    throw ArgumentError("layer has " + std::to_string(spec.views) + " view weights but " +
                        std::to_string(views.angles.size()) + " view angles were given");
  }
  if (std::abs(nbrs.radius - spec.radius) > 1e-12) {
    throw ArgumentError("neighborhoods were built with a different radius than the layer");
  }
  params.check_shapes(spec);
  std::vector<double> w(params.view_weights.values().begin(), params.view_weights.values().end());
  EdgeTable table = apply_views(build_edge_table(nbrs, spec.fusion), views, w);
  return forward_impl(x, std::move(table), params, spec, mode, views);
}

template <typename T>
GeoConvOutput<T> baseline_edge_forward(const Matrix<T>& x, const NeighborhoodSet& nbrs,
                                       const GeoConvParams<T>& params, const GeoConvSpec& spec,
                                       Mode mode) {
  if (spec.fusion != EdgeFusion::kAverage) {
    throw ArgumentError("baseline_edge_forward requires a layer with average fusion");
  }
  return geoconv_forward(x, nbrs, params, spec, mode);
}

template <typename T>
GeoConvGrads<T> geoconv_backward(const GeoConvCache<T>& cache, const GeoConvParams<T>& params,
                                 const Matrix<T>& grad_out) {
  const GeoConvSpec& spec = cache.spec;
  const EdgeTable& table = cache.table;
  const std::size_t n = cache.input.rows();
  const std::size_t cr = spec.reduction_channels;
  const std::size_t co = spec.out_channels;
  const std::size_t nb = spec.num_bases();
  if (grad_out.rows() != n || grad_out.cols() != co) {
    throw ArgumentError("geoconv_backward: gradient shape mismatch");
  }

  GeoConvGrads<T> g;
  g.params = GeoConvParams<T>::zeros(spec);

  // Center path.
  LinearGrads<T> center = linear_backward(cache.input, params.center_weight, spec.bias, grad_out);
  g.params.center_weight = std::move(center.weight);
  if (spec.bias) g.params.center_bias = std::move(center.bias);
  g.input = std::move(center.input);

  // Expansion: only active rows received an edge term.
  Matrix<T> grad_edge_out(n, co);
  for (std::size_t p = 0; p < n; ++p) {
    if (!table.active[p]) continue;
    std::copy_n(grad_out.data() + p * co, co, grad_edge_out.data() + p * co);
  }
  g.params.expand_weight = matmul_tn(cache.edge_feature, grad_edge_out);
  if (spec.bias) g.params.expand_bias = column_sums(grad_edge_out);
  Matrix<T> grad_feature = matmul_nt(grad_edge_out, params.expand_weight);

  Matrix<T> grad_agg;
  if (spec.reduction_norm) {
    const Matrix<T> grad_norm = relu_backward(cache.normalized, grad_feature);
    BatchNormGrads<T> bn = batchnorm_backward(cache.bn, params.norm, grad_norm);
    g.params.norm.gamma = std::move(bn.gamma);
    g.params.norm.beta = std::move(bn.beta);
    grad_agg = std::move(bn.input);
  } else {
    grad_agg = std::move(grad_feature);
  }

  // Scatter to neighbors through the reverse adjacency (gather per target).
  std::vector<Matrix<T>> grad_reduced(nb, Matrix<T>(n, cr));
  parallel_for(0, n, [&](std::size_t q) {
    for (std::uint32_t i = table.incoming_offsets[q]; i < table.incoming_offsets[q + 1]; ++i) {
      const std::uint32_t e = table.incoming[i];
      const std::uint32_t p = table.sources[e];
      if (!table.active[p]) continue;
      const T* ga = grad_agg.data() + p * cr;
      for (std::size_t b = 0; b < nb; ++b) {
        const double c = table.coefficients[e * nb + b];
        if (c == 0.0) continue;
        const T f = static_cast<T>(table.weights[e] * c);
        T* gz = grad_reduced[b].data() + q * cr;
        for (std::size_t k = 0; k < cr; ++k) gz[k] += f * ga[k];
      }
    }
  });

  if (spec.views > 0) {
    std::vector<double> cosines, sines;
    view_trig(cache.views, cosines, sines);
    std::vector<double> grad_w(spec.views, 0.0);
    for (std::size_t e = 0; e < table.edge_count(); ++e) {
      const std::uint32_t p = table.sources[e];
      if (!table.active[p]) continue;
      const std::uint32_t q = table.targets[e];
      const T* ga = grad_agg.data() + p * cr;
      std::array<double, kNumBases> dots{};
      for (std::size_t b = 0; b < kNumBases; ++b) {
        const T* z = cache.reduced[b].data() + q * cr;
        double s = 0.0;
        for (std::size_t k = 0; k < cr; ++k) s += static_cast<double>(ga[k]) * z[k];
        dots[b] = s;
      }
      for (std::size_t v = 0; v < spec.views; ++v) {
        const Vec3 rotated = rotate_edge_z(table.edges[e], cosines[v], sines[v]);
        const QuadrantBases qb = quadrant_bases(rotated);
        const auto c = decomposition_coefficients(rotated, qb);
        grad_w[v] += table.weights[e] * (c[0] * dots[qb[0]] + c[1] * dots[qb[1]] + c[2] * dots[qb[2]]);
      }
    }
    for (std::size_t v = 0; v < spec.views; ++v) g.params.view_weights[v] = static_cast<T>(grad_w[v]);
  }

  for (std::size_t b = 0; b < nb; ++b) {
    g.params.direction_weights[b] = matmul_tn(cache.input, grad_reduced[b]);
    add_inplace(g.input, matmul_nt(grad_reduced[b], params.direction_weights[b]));
  }
  return g;
}

#define GEOCNN_INSTANTIATE_GEOCONV(T)                                                             \
  template struct GeoConvParams<T>;                                                               \
  template GeoConvOutput<T> geoconv_forward(const Matrix<T>&, const NeighborhoodSet&,             \
                                            const GeoConvParams<T>&, const GeoConvSpec&, Mode);   \
  template GeoConvOutput<T> geoconv_forward(const Matrix<T>&, EdgeTable, const GeoConvParams<T>&, \
                                            const GeoConvSpec&, Mode);                            \
  template GeoConvOutput<T> geoconv_forward_multiview(const Matrix<T>&, const NeighborhoodSet&,   \
                                                      const GeoConvParams<T>&,                    \
                                                      const GeoConvSpec&,                         \
                                                      const MultiViewConfig&, Mode);              \
  template GeoConvOutput<T> baseline_edge_forward(const Matrix<T>&, const NeighborhoodSet&,       \
                                                  const GeoConvParams<T>&, const GeoConvSpec&,    \
                                                  Mode);                                          \
  template GeoConvGrads<T> geoconv_backward(const GeoConvCache<T>&, const GeoConvParams<T>&,      \
                                            const Matrix<T>&);

GEOCNN_INSTANTIATE_GEOCONV(float)
GEOCNN_INSTANTIATE_GEOCONV(double)
GEOCNN_INSTANTIATE_GEOCONV(long double)

}  // namespace geocnn
