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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geocnn/model.hpp"

namespace geocnn {

/// |a - n| / (|a| + |n| + 1e-8).
double relative_error(double analytic, double numeric);

template <typename T>
struct BasicGradTarget {
  std::string name;
  std::span<T> values;               // perturbed in place, restored afterwards
  std::span<const double> analytic;  // same length as values
};
using GradTarget = BasicGradTarget<double>;

struct GradCheckEntry {
  std::string scope;
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  double tolerance = 0.0;
  double seconds = 0.0;
  std::vector<GradCheckEntry> entries;
  std::vector<std::string> notes;

  bool passed() const;
  double max_rel_error() const;
  /// Fixed-width table, one row per entry.
  std::string table() const;
};

/// Central differences (L(v+h) - L(v-h)) / 2h for every element of every
/// target, compared with the analytic gradient. T is double or long double;
/// the wider type lowers the rounding noise of the numeric side.
template <typename T>
std::vector<GradCheckEntry> check_gradients(const std::string& scope,
                                            const std::vector<BasicGradTarget<T>>& targets,
                                            const std::function<T()>& loss, double tolerance,
                                            double h = 1e-6);

inline std::vector<GradCheckEntry> check_gradients(const std::string& scope,
                                                   const std::vector<GradTarget>& targets,
                                                   const std::function<double()>& loss,
                                                   double tolerance, double h = 1e-6) {
  return check_gradients<double>(scope, targets, loss, tolerance, h);
}

enum class GradScope { kOps, kGeoConv, kFullModel };

std::optional<GradScope> parse_grad_scope(std::string_view name);
std::string_view grad_scope_name(GradScope scope);

/// kOps: linear, ReLU, batch norm (train, masked, eval), segment max pool,
/// softmax cross-entropy.
/// kGeoConv: decomposed, baseline and multi-view layers in train mode plus the
/// decomposed layer in eval mode, on random tiny instances.
/// kFullModel: the micro config, batch of four, train mode, mean
/// cross-entropy. Analytic gradients in double; the finite-difference side
/// runs the same model in long double so that parameters with exactly zero
/// gradient (e.g. a shift removed by a later batch norm) resolve below the
/// 1e-8 floor of the relative error.
GradCheckReport gradcheck_suite(GradScope scope, std::uint64_t seed, double tolerance);

/// Smallest distance of any ReLU input from zero and of any pooled maximum
/// from the runner-up in a forward pass. Finite differences are only
/// meaningful when perturbations stay well inside this margin.
template <typename T>
double kink_margin(const ForwardPass<T>& pass);

}  // namespace geocnn
