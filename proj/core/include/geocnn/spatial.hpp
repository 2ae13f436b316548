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
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "geocnn/pointcloud.hpp"

namespace geocnn {

inline constexpr std::size_t kDefaultNeighborCap = 64;

using Vec3 = std::array<double, 3>;

/// Squared Euclidean distance evaluated in double. Every neighborhood query
/// orders and thresholds with this exact expression.
inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = static_cast<double>(b[0]) - a[0];
  const double dy = static_cast<double>(b[1]) - a[1];
  const double dz = static_cast<double>(b[2]) - a[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Neighbors of one query point p, ascending by index. The center and any
/// point coincident with it are excluded.
struct NeighborList {
  std::vector<std::uint32_t> indices;
  std::vector<Vec3> edges;        // q - p
  std::vector<double> distances;  // |q - p|, in (0, r]

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

/// One neighbor list per point of a cloud, all built with the same radius.
struct NeighborhoodSet {
  double radius = 0.0;
  std::vector<NeighborList> lists;

  std::size_t size() const { return lists.size(); }
  std::size_t edge_count() const;
};

/// Uniform grid over a fixed set of positions. Immutable once built; safe for
/// concurrent queries.
class SpatialIndex {
 public:
  SpatialIndex(std::vector<Point3> positions, double cell_size);

  std::size_t size() const { return positions_.size(); }
  double cell_size() const { return cell_size_; }
  const Vec3& origin() const { return origin_; }
  std::span<const Point3> positions() const { return positions_; }

  std::size_t occupied_cells() const { return cells_.size(); }
  /// Contents of every occupied cell, in unspecified cell order.
  std::vector<std::vector<std::uint32_t>> cell_contents() const;

  /// All j != center with 0 < |p_j - p_center| <= r. If more than `cap`
  /// qualify, keeps the `cap` nearest (ties by lower index).
  NeighborList ball_query(std::size_t center, double r,
                          std::optional<std::size_t> cap = kDefaultNeighborCap) const;

  /// The k nearest points ordered by (distance, index). The center is
  /// excluded when n > k. When n <= k every point (center included) is
  /// listed by distance and the list is padded by cycling from the nearest.
  std::vector<std::uint32_t> knn_query(std::size_t center, std::size_t k) const;

 private:
  struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
  };
  struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept;
  };
  struct CellRange {
    std::uint32_t begin, end;
  };

  CellKey cell_of(const Point3& p) const;
  std::int64_t axis_cell(double v, int axis) const;
  template <typename Fn>
  void visit_cell(std::int64_t x, std::int64_t y, std::int64_t z, Fn&& fn) const;

  std::vector<Point3> positions_;
  double cell_size_;
  Vec3 origin_{};
  CellKey max_cell_{};
  std::vector<std::uint32_t> order_;
  std::unordered_map<CellKey, CellRange, CellKeyHash> cells_;
};

/// Ball query around every indexed point.
NeighborhoodSet build_neighborhoods(const SpatialIndex& index, double r,
                                    std::optional<std::size_t> cap = kDefaultNeighborCap);
/// Builds a grid with cell size r, then queries every point.
NeighborhoodSet build_neighborhoods(const std::vector<Point3>& positions, double r,
                                    std::optional<std::size_t> cap = kDefaultNeighborCap);

}  // namespace geocnn
