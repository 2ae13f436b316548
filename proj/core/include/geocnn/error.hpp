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
#include <stdexcept>
#include <string>

namespace geocnn {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed a value outside an operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A model or training configuration is internally inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The operating system refused a read or write.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents are malformed.
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        reason_(what),
        byte_offset_(byte_offset) {}

  const std::string& reason() const noexcept { return reason_; }
  std::uint64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::string reason_;
  std::uint64_t byte_offset_;
};

}  // namespace geocnn
