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

namespace geocnn {

/// splitmix64 (Steele, Lea, Flood). Used to expand a 64-bit seed into
/// xoshiro state and to derive independent stream seeds.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

/// Mixes two 64-bit values into one seed. Order-sensitive.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// xoshiro256** 1.0 (Blackman, Vigna) with every derived distribution
/// written out here, so a seed reproduces the same stream on any platform.
/// The standard library distributions are implementation-defined and are
/// never used.
class Rng {
 public:
  using result_type = std::uint64_t;

  /// State is filled with four successive splitmix64 outputs of `seed`.
  explicit Rng(std::uint64_t seed);
  static Rng from_state(const std::array<std::uint64_t, 4>& state);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via the Box-Muller transform; the second variate of
  /// each pair is cached.
  double normal();

  const std::array<std::uint64_t, 4>& state() const { return s_; }

 private:
  Rng() = default;
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const std::uint64_t j = rng.below(i);
    using std::swap;
    swap(first[i - 1], first[j]);
  }
}

}  // namespace geocnn
