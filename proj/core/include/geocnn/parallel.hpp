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
#include <functional>

namespace geocnn {

/// Caps the number of worker threads used by kernels. 0 restores the
/// default (all available cores). No-op without OpenMP.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

/// Runs `body(i)` for i in [begin, end). Iterations are statically
/// partitioned; callers must make each iteration write disjoint outputs so
/// results do not depend on the worker count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace geocnn
