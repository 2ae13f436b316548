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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geocnn/model.hpp"
#include "geocnn/tensor.hpp"

namespace geocnn {

// GCK1 layout, little-endian:
//   "GCK1" | u32 version | u64 tensor count
//   per tensor: u16 name length | name | u32 rows | u32 cols | f32 payload
//   "CFG1" | u32 length | UTF-8 key=value text

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Matrix<float> value;
};

struct CheckpointFile {
  std::vector<CheckpointTensor> tensors;
  std::string config_text;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file);
/// LoadError with the byte offset of the first malformed field.
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Adam moments, one pair per trainable tensor, stored as "<name>.m" / "<name>.v".
struct OptimizerState {
  std::int64_t step = 0;
  ModelParams<float> m;
  ModelParams<float> v;

  static OptimizerState zeros(const GeoCnnConfig& config);
};

struct Checkpoint {
  GeoCnnConfig config;
  ModelParams<float> params;
  std::optional<OptimizerState> optimizer;
  /// Extra key=value pairs, stored as "meta.<key>=<value>" lines.
  std::map<std::string, std::string> metadata;
};

CheckpointFile to_file(const Checkpoint& ckpt);
Checkpoint from_file(const CheckpointFile& file);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// IoError if unreadable; LoadError (message prefixed with the path) if malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace geocnn
