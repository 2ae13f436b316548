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

#include <cstdint>
#include <vector>

#include "geocnn/pointcloud.hpp"
#include "geocnn/rng.hpp"

namespace geocnn::fixture {

/// Normalized 12-point clouds cycling through the four shape classes.
inline std::vector<PointCloud> micro_clouds(std::size_t count, std::uint64_t seed) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto c = synth_shape(kAllShapes[i % 4], 32, 0.02, mix_seed(seed, i));
    out.push_back(normalize_unit_sphere(sample_points(c, 12, mix_seed(seed, 100 + i))));
  }
  return out;
}

}  // namespace geocnn::fixture
