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
#include <vector>

#include "geocnn/rng.hpp"
#include "geocnn/spatial.hpp"
#include "geocnn/tensor.hpp"

namespace geocnn {

// ---------------------------------------------------------------------------
// Edge geometry

/// The six signed axis bases, indexed +x, -x, +y, -y, +z, -z. Bases 2k and
/// 2k+1 are antipodal.
inline constexpr std::size_t kNumBases = 6;
inline constexpr std::array<Vec3, kNumBases> kBases = {{
    {1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0},
    {0.0, 1.0, 0.0}, {0.0, -1.0, 0.0},
    {0.0, 0.0, 1.0}, {0.0, 0.0, -1.0},
}};
enum Basis : std::uint8_t { kPosX = 0, kNegX = 1, kPosY = 2, kNegY = 3, kPosZ = 4, kNegZ = 5 };

/// One basis per axis, chosen by the sign of that edge component.
using QuadrantBases = std::array<std::uint8_t, 3>;

/// Per axis k: basis 2k if edge[k] >= 0, else 2k+1. A zero component picks
/// the positive basis; its coefficient is zero, so the choice does not change
/// any value. Throws ArgumentError for the zero vector.
QuadrantBases quadrant_bases(const Vec3& edge);

/// cos^2 of the angle between `edge` and each selected basis, i.e.
/// (edge . b)^2 / |edge|^2. Each lies in [0, 1] and the three sum to 1.
std::array<double, 3> decomposition_coefficients(const Vec3& edge, const QuadrantBases& bases);

/// (r - dist)^2 for 0 < dist <= r; zero on the boundary.
double distance_weight(double dist, double r);

struct EdgeGeometry {
  QuadrantBases bases{};
  std::array<double, 3> coefficients{};
  double weight = 0.0;
};

EdgeGeometry edge_geometry(const Vec3& edge, double dist, double r);

/// Rotates an edge vector about +z.
inline Vec3 rotate_edge_z(const Vec3& e, double cos_a, double sin_a) {
  return {cos_a * e[0] - sin_a * e[1], sin_a * e[0] + cos_a * e[1], e[2]};
}

// ---------------------------------------------------------------------------
// Layer description and parameters

enum class EdgeFusion {
  kDecomposed,  // six direction matrices, cos^2 aggregation, distance-weighted mean
  kAverage,     // one reduction matrix, unweighted mean (baseline)
};

struct GeoConvSpec {
  std::size_t in_channels = 0;
  std::size_t reduction_channels = 0;
  std::size_t out_channels = 0;
  double radius = 0.0;
  EdgeFusion fusion = EdgeFusion::kDecomposed;
  bool bias = true;
  /// Batch norm + ReLU on the aggregated reduced edge feature.
  bool reduction_norm = true;
  /// Number of virtual z-rotation views; 0 disables the multi-view path.
  std::size_t views = 0;

  std::size_t num_bases() const { return fusion == EdgeFusion::kDecomposed ? kNumBases : 1; }
  void validate() const;
};

/// Virtual views as z-rotation angles, each in [0, 2*pi).
struct MultiViewConfig {
  std::vector<double> angles;

  /// Angles 2*pi*v/V for v = 0..V-1.
  static MultiViewConfig uniform(std::size_t views);
  void validate() const;
};

template <typename T>
struct GeoConvParams {
  Matrix<T> center_weight;                   // Cin x Cout
  Matrix<T> center_bias;                     // 1 x Cout, empty without bias
  std::vector<Matrix<T>> direction_weights;  // num_bases x (Cin x Creduc)
  Matrix<T> expand_weight;                   // Creduc x Cout
  Matrix<T> expand_bias;                     // 1 x Cout, empty without bias
  BatchNormParams<T> norm;                   // Creduc channels
  Matrix<T> view_weights;                    // 1 x V, empty when views == 0

  /// Glorot-uniform matrices drawn in declaration order from `rng`; zero
  /// biases; identity batch norm; view weights 1/V.
  static GeoConvParams init(const GeoConvSpec& spec, Rng& rng);
  /// Same shapes, all zeros (gradient accumulator).
  static GeoConvParams zeros(const GeoConvSpec& spec);

  /// Throws ArgumentError unless every shape matches `spec`.
  void check_shapes(const GeoConvSpec& spec) const;
  /// Direction matrices plus the expansion matrix: Cin*nb*Creduc + Creduc*Cout.
  std::size_t reduction_parameter_count() const;
};

/// Flattened neighborhood geometry consumed by the kernels: CSR adjacency,
/// normalized neighbor weights, and per-edge basis coefficients.
struct EdgeTable {
  std::size_t points = 0;
  std::size_t bases = kNumBases;
  std::vector<std::uint32_t> offsets;  // points + 1
  std::vector<std::uint32_t> sources;  // center p of each edge
  std::vector<std::uint32_t> targets;  // neighbor q of each edge
  std::vector<double> weights;         // d / sum(d), or 1/|N| for kAverage
  std::vector<double> coefficients;    // edges x bases
  std::vector<Vec3> edges;             // q - p, kept for view rotation
  std::vector<std::uint8_t> active;    // point has a usable neighborhood
  std::vector<std::uint32_t> incoming_offsets;  // points + 1
  std::vector<std::uint32_t> incoming;          // edge ids grouped by target

  std::size_t edge_count() const { return targets.size(); }
};

/// `weight_scale` multiplies every raw distance weight before normalization;
/// it exists to exercise the scale invariance of the weighted mean.
EdgeTable build_edge_table(const NeighborhoodSet& nbrs, EdgeFusion fusion,
                           double weight_scale = 1.0);

/// Replaces single-view coefficients with sum_v w_v * coeff(rotate(edge, a_v)).
EdgeTable apply_views(EdgeTable table, const MultiViewConfig& views,
                      std::span<const double> view_weights);

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct GeoConvCache {
  GeoConvSpec spec;
  Mode mode = Mode::kEval;
  Matrix<T> input;
  EdgeTable table;
  MultiViewConfig views;              // empty unless multi-view
  std::vector<Matrix<T>> reduced;     // per basis: input * W_b
  Matrix<T> aggregated;               // reduced edge feature, before norm
  BatchNormCache<T> bn;
  Matrix<T> normalized;               // after batch norm, before ReLU
  Matrix<T> edge_feature;             // input to the expansion
};

template <typename T>
struct GeoConvOutput {
  Matrix<T> output;
  GeoConvCache<T> cache;
};

template <typename T>
struct GeoConvGrads {
  Matrix<T> input;
  GeoConvParams<T> params;  // running statistics unused
};

/// y_p = W_c x_p + b_c + Expand(ReLU(BN(sum_q w_pq g(p,q))))
/// with g(p,q) = sum_{b in B_q} cos^2(theta_pq,b) W_b x_q and
/// w_pq = d(p,q,r) / sum_q' d(p,q',r). Points whose neighborhood is empty or
/// carries zero total weight get an exact zero edge term and are left out of
/// the batch statistics.
template <typename T>
GeoConvOutput<T> geoconv_forward(const Matrix<T>& x, const NeighborhoodSet& nbrs,
                                 const GeoConvParams<T>& params, const GeoConvSpec& spec,
                                 Mode mode);

/// The same pipeline over a prebuilt table.
template <typename T>
GeoConvOutput<T> geoconv_forward(const Matrix<T>& x, EdgeTable table,
                                 const GeoConvParams<T>& params, const GeoConvSpec& spec,
                                 Mode mode);

/// Replaces g by sum_v w_v sum_{b in B_{q,v}} cos^2(theta_{pq_v,b}) W_b x_q where
/// pq_v is the edge rotated about z by a_v and B_{q,v} is its quadrant. The
/// products W_b x_q are computed once and shared by all views.
template <typename T>
GeoConvOutput<T> geoconv_forward_multiview(const Matrix<T>& x, const NeighborhoodSet& nbrs,
                                           const GeoConvParams<T>& params,
                                           const GeoConvSpec& spec, const MultiViewConfig& views,
                                           Mode mode);

/// Baseline edge path: unweighted neighbor mean of W x_q with a single
/// reduction matrix. `spec.fusion` must be kAverage.
template <typename T>
GeoConvOutput<T> baseline_edge_forward(const Matrix<T>& x, const NeighborhoodSet& nbrs,
                                       const GeoConvParams<T>& params, const GeoConvSpec& spec,
                                       Mode mode);

/// Analytic gradients. Geometry (coefficients, distance weights) is constant.
template <typename T>
GeoConvGrads<T> geoconv_backward(const GeoConvCache<T>& cache, const GeoConvParams<T>& params,
                                 const Matrix<T>& grad_out);

}  // namespace geocnn
