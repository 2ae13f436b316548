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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace geocnn {

using Point3 = std::array<float, 3>;

/// n points by c channels of float32, row-major. Channels 0-2 are xyz;
/// channels 3-5, when present, are a unit surface normal.
class PointCloud {
 public:
  /// Validates the invariants; throws ArgumentError on violation.
  PointCloud(std::size_t n, std::size_t channels, std::vector<float> data,
             std::optional<int> label = std::nullopt);

  std::size_t size() const { return n_; }
  std::size_t channels() const { return channels_; }
  bool has_normals() const { return channels_ == 6; }
  const std::optional<int>& label() const { return label_; }
  void set_label(std::optional<int> label) { label_ = label; }

  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * channels_, channels_};
  }
  float at(std::size_t i, std::size_t c) const { return data_[i * channels_ + c]; }
  Point3 position(std::size_t i) const {
    const float* r = data_.data() + i * channels_;
    return {r[0], r[1], r[2]};
  }
  std::vector<Point3> positions() const;

  bool operator==(const PointCloud&) const = default;

 private:
  std::size_t n_;
  std::size_t channels_;
  std::vector<float> data_;
  std::optional<int> label_;
};

/// Reads a GPC1 file. Throws IoError if unreadable and LoadError (with the
/// byte offset of the offending field) if malformed.
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Encodes to / decodes from the GPC1 byte layout.
std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(std::span<const std::uint8_t> bytes);

/// Translates the centroid to the origin and scales so the farthest point has
/// norm 1. A cloud whose points all coincide is only translated.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

/// Draws n_out rows: without replacement when the cloud has at least n_out
/// points, with replacement otherwise.
PointCloud sample_points(const PointCloud& cloud, std::size_t n_out, std::uint64_t seed);

/// Rotates positions (and normals) about +z by `angle` radians.
PointCloud rotate_z(const PointCloud& cloud, double angle);

enum class ShapeKind : int { kSphere = 0, kCube = 1, kCylinder = 2, kCone = 3 };

inline constexpr std::array<ShapeKind, 4> kAllShapes = {
    ShapeKind::kSphere, ShapeKind::kCube, ShapeKind::kCylinder, ShapeKind::kCone};

std::string_view shape_name(ShapeKind kind);
std::optional<ShapeKind> parse_shape(std::string_view name);

/// Surface samples with analytic normals, Gaussian positional jitter of
/// stddev `jitter`, normalized to the unit sphere. Label = kind id.
///
/// Centrally symmetric shapes (sphere, cube, cylinder) are sampled in
/// antipodal pairs, so with zero jitter and even n their centroid is the
/// origin up to rounding.
PointCloud synth_shape(ShapeKind kind, std::size_t n, double jitter, std::uint64_t seed);

/// `per_class` clouds of each kind, class-major. Cloud i of class c uses seed
/// mix_seed(seed, c * per_class + i) and carries label c.
std::vector<PointCloud> synth_dataset(std::span<const ShapeKind> kinds, std::size_t per_class,
                                      std::size_t n, double jitter, std::uint64_t seed);

/// Parses whitespace- or comma-separated rows of 3 (xyz) or 6 (xyz + normal)
/// numbers. Blank lines and lines starting with '#' are skipped. Normals are
/// renormalized to unit length.
PointCloud parse_xyz_text(std::istream& in, std::optional<int> label = std::nullopt);

/// FNV-1a over label and raw float bytes; stable across runs and platforms.
std::uint64_t content_hash(const PointCloud& cloud);

}  // namespace geocnn
