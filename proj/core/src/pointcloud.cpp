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

#include "geocnn/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>

#include "geocnn/error.hpp"
#include "geocnn/rng.hpp"

namespace geocnn {

namespace {

constexpr std::array<char, 4> kCloudMagic = {'G', 'P', 'C', '1'};
constexpr std::size_t kHeaderBytes = 16;
constexpr double kNormalTolerance = 1e-3;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

double row_normal_norm(const float* row) {
  const double nx = row[3], ny = row[4], nz = row[5];
  return std::sqrt(nx * nx + ny * ny + nz * nz);
}

}  // namespace

PointCloud::PointCloud(std::size_t n, std::size_t channels, std::vector<float> data,
                       std::optional<int> label)
    : n_(n), channels_(channels), data_(std::move(data)), label_(label) {
  if (n_ == 0) throw ArgumentError("point cloud must contain at least one point");
  if (channels_ != 3 && channels_ != 6) {
    throw ArgumentError("unsupported channel count " + std::to_string(channels_));
  }
  if (data_.size() != n_ * channels_) {
    throw ArgumentError("point cloud data has " + std::to_string(data_.size()) +
                        " values, expected " + std::to_string(n_ * channels_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ArgumentError("non-finite value at row " + std::to_string(i / channels_));
    }
  }
  if (channels_ == 6) {
    for (std::size_t i = 0; i < n_; ++i) {
      const double norm = row_normal_norm(data_.data() + i * 6);
      if (std::abs(norm - 1.0) > kNormalTolerance) {
        throw ArgumentError("normal at row " + std::to_string(i) + " has norm " +
                            std::to_string(norm));
      }
    }
  }
  if (label_ && *label_ < 0) throw ArgumentError("negative class label");
}

std::vector<Point3> PointCloud::positions() const {
  std::vector<Point3> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = position(i);
  return out;
}

std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + cloud.data().size() * 4);
  out.insert(out.end(), kCloudMagic.begin(), kCloudMagic.end());
  put_u32(out, static_cast<std::uint32_t>(cloud.size()));
  put_u32(out, static_cast<std::uint32_t>(cloud.channels()));
  put_u32(out, static_cast<std::uint32_t>(cloud.label().value_or(-1)));
  for (float v : cloud.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

PointCloud decode_cloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kCloudMagic.begin(), kCloudMagic.end(), bytes.begin())) {
    throw LoadError("bad magic, expected \"GPC1\"", 0);
  }
  if (bytes.size() < kHeaderBytes) throw LoadError("truncated header", bytes.size());
  const std::uint32_t n = get_u32(bytes, 4);
  const std::uint32_t c = get_u32(bytes, 8);
  const auto label = static_cast<std::int32_t>(get_u32(bytes, 12));
  if (n == 0) throw LoadError("empty point cloud", 4);
  if (c != 3 && c != 6) {
    throw LoadError("unsupported channel count " + std::to_string(c), 8);
  }
  if (label < -1) throw LoadError("invalid label " + std::to_string(label), 12);

  const std::uint64_t values = std::uint64_t{n} * c;
  const std::uint64_t expected = kHeaderBytes + values * 4;
  if (bytes.size() < expected) {
    throw LoadError("truncated payload: expected " + std::to_string(values * 4) +
                        " bytes, found " + std::to_string(bytes.size() - kHeaderBytes),
                    bytes.size());
  }
  if (bytes.size() > expected) {
    throw LoadError("trailing bytes after payload", expected);
  }

  std::vector<float> data(values);
  for (std::uint64_t i = 0; i < values; ++i) {
    const std::size_t at = kHeaderBytes + i * 4;
    data[i] = std::bit_cast<float>(get_u32(bytes, at));
    if (!std::isfinite(data[i])) throw LoadError("non-finite value", at);
  }
  if (c == 6) {
    for (std::uint32_t i = 0; i < n; ++i) {
      const double norm = row_normal_norm(data.data() + std::size_t{i} * 6);
      if (std::abs(norm - 1.0) > kNormalTolerance) {
        throw LoadError("normal is not unit length (norm " + std::to_string(norm) + ")",
                        kHeaderBytes + (std::uint64_t{i} * 6 + 3) * 4);
      }
    }
  }
  std::optional<int> lbl;
  if (label >= 0) lbl = label;
  return PointCloud(n, c, std::move(data), lbl);
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  try {
    return decode_cloud(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.reason(), e.byte_offset());
  }
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  const auto bytes = encode_cloud(cloud);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  const std::size_t c = cloud.channels();
  std::array<double, 3> centroid{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) centroid[k] += cloud.at(i, k);
  }
  for (auto& v : centroid) v /= static_cast<double>(n);

  std::vector<double> shifted(n * 3);
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double v = cloud.at(i, k) - centroid[k];
      shifted[i * 3 + k] = v;
      sq += v * v;
    }
    max_norm = std::max(max_norm, std::sqrt(sq));
  }
  const double scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;

  std::vector<float> data(cloud.data().begin(), cloud.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) data[i * c + k] = static_cast<float>(shifted[i * 3 + k] * scale);
  }
  return PointCloud(n, c, std::move(data), cloud.label());
}

PointCloud sample_points(const PointCloud& cloud, std::size_t n_out, std::uint64_t seed) {
  if (n_out == 0) throw ArgumentError("sample_points: n_out must be positive");
  const std::size_t n = cloud.size();
  const std::size_t c = cloud.channels();
  Rng rng(seed);
  std::vector<std::size_t> picks(n_out);
  if (n_out <= n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_out; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(idx[i], idx[j]);
      picks[i] = idx[i];
    }
  } else {
    for (auto& p : picks) p = rng.below(n);
  }
  std::vector<float> data(n_out * c);
  for (std::size_t i = 0; i < n_out; ++i) {
    const auto src = cloud.row(picks[i]);
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return PointCloud(n_out, c, std::move(data), cloud.label());
}

PointCloud rotate_z(const PointCloud& cloud, double angle) {
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  const std::size_t c = cloud.channels();
  std::vector<float> data(cloud.data().begin(), cloud.data().end());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float* r = data.data() + i * c;
    for (std::size_t base = 0; base < c; base += 3) {
      const double x = r[base];
      const double y = r[base + 1];
      r[base] = static_cast<float>(cs * x - sn * y);
      r[base + 1] = static_cast<float>(sn * x + cs * y);
    }
  }
  return PointCloud(cloud.size(), c, std::move(data), cloud.label());
}

std::string_view shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kSphere: return "sphere";
    case ShapeKind::kCube: return "cube";
    case ShapeKind::kCylinder: return "cylinder";
    case ShapeKind::kCone: return "cone";
  }
  return "unknown";
}

std::optional<ShapeKind> parse_shape(std::string_view name) {
  for (ShapeKind k : kAllShapes) {
    if (shape_name(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

struct SurfaceSample {
  std::array<double, 3> position;
  std::array<double, 3> normal;
};

SurfaceSample sample_surface(ShapeKind kind, Rng& rng) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  switch (kind) {
    case ShapeKind::kSphere: {
      std::array<double, 3> d{};
      double norm = 0.0;
      do {
        d = {rng.normal(), rng.normal(), rng.normal()};
        norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      } while (norm < 1e-12);
      for (auto& v : d) v /= norm;
      return {d, d};
    }
    case ShapeKind::kCube: {
      const auto face = static_cast<int>(rng.below(6));
      const int axis = face / 2;
      const double sign = face % 2 == 0 ? 1.0 : -1.0;
      std::array<double, 3> p{};
      std::array<double, 3> nrm{0.0, 0.0, 0.0};
      for (int k = 0; k < 3; ++k) p[k] = k == axis ? sign : rng.uniform(-1.0, 1.0);
      nrm[axis] = sign;
      return {p, nrm};
    }
    case ShapeKind::kCylinder: {
      // Lateral area 4*pi against 2*pi for both caps.
      const double theta = kTwoPi * rng.uniform();
      if (rng.uniform() < 2.0 / 3.0) {
        const double z = rng.uniform(-1.0, 1.0);
        return {{std::cos(theta), std::sin(theta), z}, {std::cos(theta), std::sin(theta), 0.0}};
      }
      const double rho = std::sqrt(rng.uniform());
      const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
      return {{rho * std::cos(theta), rho * std::sin(theta), sign}, {0.0, 0.0, sign}};
    }
    case ShapeKind::kCone: {
      // Apex (0,0,1), base radius 1 at z = -1. Lateral area pi*sqrt(5), base pi.
      const double sqrt5 = std::sqrt(5.0);
      const double theta = kTwoPi * rng.uniform();
      const double rho = std::sqrt(rng.uniform());
      if (rng.uniform() < sqrt5 / (1.0 + sqrt5)) {
        return {{rho * std::cos(theta), rho * std::sin(theta), 1.0 - 2.0 * rho},
                {2.0 * std::cos(theta) / sqrt5, 2.0 * std::sin(theta) / sqrt5, 1.0 / sqrt5}};
      }
      return {{rho * std::cos(theta), rho * std::sin(theta), -1.0}, {0.0, 0.0, -1.0}};
    }
  }
  throw ArgumentError("unknown shape kind");
}

}  // namespace

PointCloud synth_shape(ShapeKind kind, std::size_t n, double jitter, std::uint64_t seed) {
  if (n < 16) throw ArgumentError("synth_shape needs at least 16 points");
  if (jitter < 0.0) throw ArgumentError("jitter must be non-negative");
  Rng rng(seed);
  const bool symmetric = kind != ShapeKind::kCone;
  std::vector<SurfaceSample> samples;
  samples.reserve(n);
  while (samples.size() < n) {
    SurfaceSample s = sample_surface(kind, rng);
    samples.push_back(s);
    if (symmetric && samples.size() < n) {
      for (int k = 0; k < 3; ++k) {
        s.position[k] = -s.position[k];
        s.normal[k] = -s.normal[k];
      }
      samples.push_back(s);
    }
  }
  std::vector<float> data(n * 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      double p = samples[i].position[k];
      if (jitter > 0.0) p += jitter * rng.normal();
      data[i * 6 + k] = static_cast<float>(p);
      data[i * 6 + 3 + k] = static_cast<float>(samples[i].normal[k]);
    }
  }
  PointCloud raw(n, 6, std::move(data), static_cast<int>(kind));
  return normalize_unit_sphere(raw);
}

PointCloud parse_xyz_text(std::istream& in, std::optional<int> label) {
  std::vector<float> data;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw ArgumentError("line " + std::to_string(line_no) + ": not a number: " + token);
      }
    }
    if (values.size() != 3 && values.size() != 6) {
      throw ArgumentError("line " + std::to_string(line_no) + ": expected 3 or 6 values, got " +
                          std::to_string(values.size()));
    }
    if (width == 0) width = values.size();
    if (values.size() != width) {
      throw ArgumentError("line " + std::to_string(line_no) + ": inconsistent column count");
    }
    if (width == 6) {
      const double norm =
          std::sqrt(values[3] * values[3] + values[4] * values[4] + values[5] * values[5]);
      if (!(norm > 0.0)) throw ArgumentError("line " + std::to_string(line_no) + ": zero normal");
      for (int k = 3; k < 6; ++k) values[k] /= norm;
    }
    for (double v : values) data.push_back(static_cast<float>(v));
    ++rows;
  }
  if (rows == 0) throw ArgumentError("no points in input");
  return PointCloud(rows, width, std::move(data), label);
}

std::vector<PointCloud> synth_dataset(std::span<const ShapeKind> kinds, std::size_t per_class,
                                      std::size_t n, double jitter, std::uint64_t seed) {
  if (per_class == 0) throw ArgumentError("per-class count must be positive");
  std::vector<PointCloud> out;
  out.reserve(kinds.size() * per_class);
  for (std::size_t c = 0; c < kinds.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      PointCloud cloud = synth_shape(kinds[c], n, jitter, mix_seed(seed, c * per_class + i));
      cloud.set_label(static_cast<int>(c));
      out.push_back(std::move(cloud));
    }
  }
  return out;
}

std::uint64_t content_hash(const PointCloud& cloud) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint32_t word) {
    for (int i = 0; i < 4; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint32_t>(cloud.size()));
  feed(static_cast<std::uint32_t>(cloud.channels()));
  feed(static_cast<std::uint32_t>(cloud.label().value_or(-1)));
  for (float v : cloud.data()) feed(std::bit_cast<std::uint32_t>(v));
  return h;
}

}  // namespace geocnn
