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
#include <filesystem>
#include <string>
#include <vector>

#include "geocnn/pointcloud.hpp"

namespace geocnn {

struct ManifestEntry {
  std::filesystem::path path;
  int label = 0;
};

/// A labelled list of GPC1 files. On disk: `<name>.csv` with header
/// `path,label` and a sidecar `classes.txt` (one class name per line, line
/// index = class id) in the same directory. Relative paths resolve against
/// the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return class_names.size(); }
  /// Throws ConfigError if labels are outside [0, num_classes).
  void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& csv_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);

/// Loads every entry; the manifest label overrides any label in the file.
/// Errors are rethrown with the offending path in the message.
std::vector<PointCloud> load_dataset(const DatasetManifest& manifest,
                                     const std::filesystem::path& base_dir);

}  // namespace geocnn
