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

#include "geocnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

#include "geocnn/error.hpp"

namespace geocnn {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'K', '1'};
constexpr char kConfigMagic[4] = {'C', 'F', 'G', '1'};

void put_uint(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw LoadError(std::string("truncated ") + what, bytes_.size());
  }
  std::uint64_t uint(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool magic(const char (&m)[4]) const {
    return remaining() >= 4 && std::equal(m, m + 4, bytes_.begin() + static_cast<std::ptrdiff_t>(pos_));
  }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_uint(out, kCheckpointVersion, 4);
  put_uint(out, file.tensors.size(), 8);
  for (const auto& t : file.tensors) {
    if (t.name.empty() || t.name.size() > 0xffff) {
      throw ArgumentError("checkpoint tensor name must be 1..65535 bytes");
    }
    if (t.value.rows() > 0xffffffffu || t.value.cols() > 0xffffffffu) {
      throw ArgumentError("checkpoint tensor '" + t.name + "' is too large");
    }
    put_uint(out, t.name.size(), 2);
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_uint(out, t.value.rows(), 4);
    put_uint(out, t.value.cols(), 4);
    for (float v : t.value.values()) put_uint(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  out.insert(out.end(), kConfigMagic, kConfigMagic + 4);
  put_uint(out, file.config_text.size(), 4);
  out.insert(out.end(), file.config_text.begin(), file.config_text.end());
  return out;
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (!r.magic(kMagic)) throw LoadError("not a GCK1 checkpoint (bad magic)", 0);
  r.skip(4);
  const std::size_t version_at = r.pos();
  const auto version = r.uint(4, "header");
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::size_t count_at = r.pos();
  const auto count = r.uint(8, "header");
  // Each record needs at least 2 + 1 + 8 bytes.
  if (count > r.remaining() / 11) {
    throw LoadError("tensor count " + std::to_string(count) + " exceeds file size", count_at);
  }
  CheckpointFile file;
  file.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const auto len = r.uint(2, "tensor record");
    if (len == 0) throw LoadError("empty tensor name", at);
    CheckpointTensor t;
    t.name = r.text(len, "tensor name");
    const auto rows = r.uint(4, "tensor shape");
    const auto cols = r.uint(4, "tensor shape");
    const std::uint64_t n = rows * cols;
    if (cols != 0 && n / cols != rows) throw LoadError("tensor shape overflows", at);
    if (n > r.remaining() / 4) throw LoadError("truncated tensor payload", bytes.size());
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4, "tensor payload")));
    t.value = Matrix<float>(rows, cols, std::move(data));
    file.tensors.push_back(std::move(t));
  }
  if (!r.magic(kConfigMagic)) {
    if (r.remaining() == 0) throw LoadError("missing config block", bytes.size());
    throw LoadError("bad config block magic", r.pos());
  }
  r.skip(4);
  const auto len = r.uint(4, "config block");
  file.config_text = r.text(len, "config block");
  if (r.remaining() != 0) throw LoadError("trailing bytes after config block", r.pos());
  return file;
}

OptimizerState OptimizerState::zeros(const GeoCnnConfig& config) {
  OptimizerState s;
  s.m = ModelParams<float>::zeros(config);
  s.v = ModelParams<float>::zeros(config);
  return s;
}

CheckpointFile to_file(const Checkpoint& ckpt) {
  CheckpointFile file;
  for (const auto& t : named_tensors(ckpt.params)) file.tensors.push_back({t.name, *t.value});
  if (ckpt.optimizer) {
    const auto m = named_tensors(ckpt.optimizer->m);
    const auto v = named_tensors(ckpt.optimizer->v);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].role != TensorRole::kTrainable) continue;
      file.tensors.push_back({m[i].name + ".m", *m[i].value});
      file.tensors.push_back({v[i].name + ".v", *v[i].value});
    }
  }
  std::string text = ckpt.config.to_text();
  if (ckpt.optimizer) text += "meta.adam_step=" + std::to_string(ckpt.optimizer->step) + "\n";
  for (const auto& [k, val] : ckpt.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || val.find('\n') != std::string::npos) {
      throw ArgumentError("checkpoint metadata '" + k + "' contains '=' or a newline");
    }
    text += "meta." + k + "=" + val + "\n";
  }
  file.config_text = std::move(text);
  return file;
}

Checkpoint from_file(const CheckpointFile& file) {
  Checkpoint ckpt;
  std::string model_text;
  std::optional<std::int64_t> adam_step;
  {
    std::istringstream in(file.config_text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.starts_with("meta.")) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw LoadError("malformed metadata line '" + line + "'", 0);
        const std::string key = line.substr(5, eq - 5);
        const std::string value = line.substr(eq + 1);
        if (key == "adam_step") {
          try {
            adam_step = std::stoll(value);
          } catch (const std::exception&) {
            throw LoadError("malformed adam_step '" + value + "'", 0);
          }
        } else {
          ckpt.metadata[key] = value;
        }
      } else {
        model_text += line + "\n";
      }
    }
  }
  try {
    ckpt.config = GeoCnnConfig::from_text(model_text);
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what(), 0);
  }

  std::unordered_map<std::string, const Matrix<float>*> by_name;
  for (const auto& t : file.tensors) {
    if (!by_name.emplace(t.name, &t.value).second) {
      throw LoadError("duplicate tensor '" + t.name + "'", 0);
    }
  }
  std::size_t used = 0;
  auto fill = [&](NamedTensor<Matrix<float>>& dst, const std::string& name) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw LoadError("missing tensor '" + name + "'", 0);
    if (!it->second->same_shape(*dst.value)) {
      throw LoadError("tensor '" + name + "' has shape " + std::to_string(it->second->rows()) +
                          "x" + std::to_string(it->second->cols()) + ", config expects " +
                          std::to_string(dst.value->rows()) + "x" +
                          std::to_string(dst.value->cols()),
                      0);
    }
    *dst.value = *it->second;
    ++used;
  };

  ckpt.params = ModelParams<float>::zeros(ckpt.config);
  for (auto& t : named_tensors(ckpt.params)) fill(t, t.name);
  if (adam_step) {
    OptimizerState opt = OptimizerState::zeros(ckpt.config);
    opt.step = *adam_step;
    auto m = named_tensors(opt.m);
    auto v = named_tensors(opt.v);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].role != TensorRole::kTrainable) continue;
      fill(m[i], m[i].name + ".m");
      fill(v[i], v[i].name + ".v");
    }
    ckpt.optimizer = std::move(opt);
  }
  if (used != file.tensors.size()) {
    throw LoadError(std::to_string(file.tensors.size() - used) +
                        " tensor(s) do not belong to the configured model",
                    0);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(to_file(ckpt));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return from_file(decode_checkpoint(bytes));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.reason(), e.byte_offset());
  }
}

}  // namespace geocnn
