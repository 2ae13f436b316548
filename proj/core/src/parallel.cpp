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

#include "geocnn/parallel.hpp"

#include <thread>

#ifdef GEOCNN_HAVE_OPENMP
#include <omp.h>
#endif

namespace geocnn {

namespace {
std::size_t g_workers = 0;
}

void set_worker_count(std::size_t workers) {
  g_workers = workers;
#ifdef GEOCNN_HAVE_OPENMP
  omp_set_num_threads(static_cast<int>(worker_count()));
#endif
}

std::size_t worker_count() {
  if (g_workers > 0) return g_workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body) {
#ifdef GEOCNN_HAVE_OPENMP
  const auto count = static_cast<std::ptrdiff_t>(end - begin);
  if (count > 1 && worker_count() > 1) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) body(begin + static_cast<std::size_t>(i));
    return;
  }
#endif
  for (std::size_t i = begin; i < end; ++i) body(i);
}

}  // namespace geocnn
