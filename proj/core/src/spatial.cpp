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

#include "geocnn/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geocnn/error.hpp"

namespace geocnn {

std::size_t NeighborhoodSet::edge_count() const {
  std::size_t total = 0;
  for (const auto& l : lists) total += l.size();
  return total;
}

std::size_t SpatialIndex::CellKeyHash::operator()(const CellKey& k) const noexcept {
  std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
  h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

SpatialIndex::SpatialIndex(std::vector<Point3> positions, double cell_size)
    : positions_(std::move(positions)), cell_size_(cell_size) {
  if (positions_.empty()) throw ArgumentError("build_index: no positions");
  if (!(cell_size_ > 0.0) || !std::isfinite(cell_size_)) {
    throw ArgumentError("build_index: cell_size must be positive and finite");
  }
  Vec3 hi{};
  for (int k = 0; k < 3; ++k) {
    origin_[k] = std::numeric_limits<double>::infinity();
    hi[k] = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double v = positions_[i][k];
      if (!std::isfinite(v)) {
        throw ArgumentError("build_index: non-finite position at index " + std::to_string(i));
      }
      origin_[k] = std::min(origin_[k], v);
      hi[k] = std::max(hi[k], v);
    }
  }
  max_cell_ = {axis_cell(hi[0], 0), axis_cell(hi[1], 1), axis_cell(hi[2], 2)};

  std::vector<std::pair<CellKey, std::uint32_t>> keyed(positions_.size());
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    keyed[i] = {cell_of(positions_[i]), static_cast<std::uint32_t>(i)};
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first.x != b.first.x) return a.first.x < b.first.x;
    if (a.first.y != b.first.y) return a.first.y < b.first.y;
    if (a.first.z != b.first.z) return a.first.z < b.first.z;
    return a.second < b.second;
  });
  order_.resize(keyed.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    order_[i] = keyed[i].second;
    auto [it, inserted] = cells_.try_emplace(keyed[i].first, CellRange{static_cast<std::uint32_t>(i),
                                                                       static_cast<std::uint32_t>(i)});
    it->second.end = static_cast<std::uint32_t>(i + 1);
  }
}

std::int64_t SpatialIndex::axis_cell(double v, int axis) const {
  return static_cast<std::int64_t>(std::floor((v - origin_[axis]) / cell_size_));
}

SpatialIndex::CellKey SpatialIndex::cell_of(const Point3& p) const {
  return {axis_cell(p[0], 0), axis_cell(p[1], 1), axis_cell(p[2], 2)};
}

template <typename Fn>
void SpatialIndex::visit_cell(std::int64_t x, std::int64_t y, std::int64_t z, Fn&& fn) const {
  const auto it = cells_.find(CellKey{x, y, z});
  if (it == cells_.end()) return;
  for (std::uint32_t i = it->second.begin; i < it->second.end; ++i) fn(order_[i]);
}

std::vector<std::vector<std::uint32_t>> SpatialIndex::cell_contents() const {
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(cells_.size());
  for (const auto& [key, range] : cells_) {
    out.emplace_back(order_.begin() + range.begin, order_.begin() + range.end);
  }
  return out;
}

NeighborList SpatialIndex::ball_query(std::size_t center, double r,
                                      std::optional<std::size_t> cap) const {
  if (center >= positions_.size()) {
    throw ArgumentError("ball_query: center index " + std::to_string(center) + " out of range");
  }
  if (!(r > 0.0)) throw ArgumentError("ball_query: radius must be positive");
  const Point3& p = positions_[center];

  struct Hit {
    double dist;
    std::uint32_t index;
  };
  std::vector<Hit> hits;
  std::int64_t lo[3], hi[3];
  const std::int64_t bound_hi[3] = {max_cell_.x, max_cell_.y, max_cell_.z};
  for (int k = 0; k < 3; ++k) {
    lo[k] = std::max<std::int64_t>(0, axis_cell(p[k] - r, k));
    hi[k] = std::min<std::int64_t>(bound_hi[k], axis_cell(p[k] + r, k));
  }
  for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
    for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
      for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
        visit_cell(x, y, z, [&](std::uint32_t j) {
          if (j == center) return;
          const double dist = std::sqrt(squared_distance(p, positions_[j]));
          if (dist > 0.0 && dist <= r) hits.push_back({dist, j});
        });
      }
    }
  }
  if (cap && hits.size() > *cap) {
    std::nth_element(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(*cap), hits.end(),
                     [](const Hit& a, const Hit& b) {
                       return a.dist != b.dist ? a.dist < b.dist : a.index < b.index;
                     });
    hits.resize(*cap);
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.index < b.index; });

  NeighborList out;
  out.indices.reserve(hits.size());
  out.edges.reserve(hits.size());
  out.distances.reserve(hits.size());
  for (const Hit& h : hits) {
    const Point3& q = positions_[h.index];
    out.indices.push_back(h.index);
    out.edges.push_back({static_cast<double>(q[0]) - p[0], static_cast<double>(q[1]) - p[1],
                         static_cast<double>(q[2]) - p[2]});
    out.distances.push_back(h.dist);
  }
  return out;
}

std::vector<std::uint32_t> SpatialIndex::knn_query(std::size_t center, std::size_t k) const {
  if (center >= positions_.size()) {
    throw ArgumentError("knn_query: center index " + std::to_string(center) + " out of range");
  }
  if (k == 0) throw ArgumentError("knn_query: k must be positive");
  const std::size_t n = positions_.size();
  const bool include_center = n <= k;
  const std::size_t wanted = include_center ? n : k;
  const Point3& p = positions_[center];

  struct Candidate {
    double d2;
    std::uint32_t index;
    bool operator<(const Candidate& o) const {
      return d2 != o.d2 ? d2 < o.d2 : index < o.index;
    }
  };
  std::vector<Candidate> found;
  const CellKey c = cell_of(p);
  const std::int64_t cc[3] = {c.x, c.y, c.z};
  const std::int64_t bound_hi[3] = {max_cell_.x, max_cell_.y, max_cell_.z};
  std::size_t visited = 0;

  for (std::int64_t ring = 0;; ++ring) {
    std::int64_t lo[3], hi[3];
    bool covers_all = true;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, cc[a] - ring);
      hi[a] = std::min<std::int64_t>(bound_hi[a], cc[a] + ring);
      covers_all = covers_all && cc[a] - ring <= 0 && cc[a] + ring >= bound_hi[a];
    }
    for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
      for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
        for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
          const std::int64_t shell = std::max({std::abs(x - cc[0]), std::abs(y - cc[1]),
                                               std::abs(z - cc[2])});
          if (shell != ring) continue;
          visit_cell(x, y, z, [&](std::uint32_t j) {
            ++visited;
            if (j == center && !include_center) return;
            found.push_back({squared_distance(p, positions_[j]), j});
          });
        }
      }
    }
    if (covers_all || visited == n) break;
    if (found.size() >= wanted) {
      std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(wanted - 1),
                       found.end());
      // Everything outside the visited block is at least ring * cell_size away.
      const double safe = static_cast<double>(ring) * cell_size_ * (1.0 - 1e-9);
      if (std::sqrt(found[wanted - 1].d2) < safe) break;
    }
  }

  std::sort(found.begin(), found.end());
  found.resize(std::min(found.size(), wanted));
  std::vector<std::uint32_t> out;
  out.reserve(k);
  for (std::size_t i = 0; out.size() < k; ++i) out.push_back(found[i % found.size()].index);
  return out;
}

NeighborhoodSet build_neighborhoods(const SpatialIndex& index, double r,
                                    std::optional<std::size_t> cap) {
  NeighborhoodSet set;
  set.radius = r;
  set.lists.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) set.lists[i] = index.ball_query(i, r, cap);
  return set;
}

NeighborhoodSet build_neighborhoods(const std::vector<Point3>& positions, double r,
                                    std::optional<std::size_t> cap) {
  if (!(r > 0.0)) throw ArgumentError("build_neighborhoods: radius must be positive");
  return build_neighborhoods(SpatialIndex(positions, r), r, cap);
}

}  // namespace geocnn
