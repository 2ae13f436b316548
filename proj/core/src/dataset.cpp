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

#include "geocnn/dataset.hpp"

#include <fstream>
#include <sstream>

#include "geocnn/error.hpp"

namespace geocnn {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void DatasetManifest::validate() const {
  for (const auto& e : entries) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= class_names.size()) {
      throw ConfigError("label " + std::to_string(e.label) + " of " + e.path.string() +
                        " is outside [0, " + std::to_string(class_names.size()) + ")");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open manifest " + csv_path.string());
  DatasetManifest manifest;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label") {
    throw ConfigError(csv_path.string() + ": expected header 'path,label'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ConfigError(csv_path.string() + ":" + std::to_string(line_no) + ": missing label");
    }
    ManifestEntry entry;
    entry.path = trim(line.substr(0, comma));
    try {
      entry.label = std::stoi(trim(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ConfigError(csv_path.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    manifest.entries.push_back(std::move(entry));
  }

  const auto classes_path = csv_path.parent_path() / "classes.txt";
  std::ifstream classes(classes_path);
  if (!classes) throw IoError("cannot open " + classes_path.string());
  while (std::getline(classes, line)) {
    line = trim(line);
    if (!line.empty()) manifest.class_names.push_back(line);
  }
  manifest.validate();
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path) {
  manifest.validate();
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + csv_path.string());
    out << "path,label\n";
    for (const auto& e : manifest.entries) out << e.path.generic_string() << ',' << e.label << '\n';
    if (!out) throw IoError("write failed: " + csv_path.string());
  }
  const auto classes_path = csv_path.parent_path() / "classes.txt";
  std::ofstream classes(classes_path, std::ios::trunc);
  if (!classes) throw IoError("cannot write " + classes_path.string());
  for (const auto& name : manifest.class_names) classes << name << '\n';
  if (!classes) throw IoError("write failed: " + classes_path.string());
}

std::vector<PointCloud> load_dataset(const DatasetManifest& manifest,
                                     const std::filesystem::path& base_dir) {
  manifest.validate();
  std::vector<PointCloud> clouds;
  clouds.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const auto path = e.path.is_absolute() ? e.path : base_dir / e.path;
    try {
      PointCloud cloud = load_cloud(path);
      cloud.set_label(e.label);
      clouds.push_back(std::move(cloud));
    } catch (const LoadError&) {
      throw;  // already names the path
    } catch (const Error& err) {
      throw IoError(path.string() + ": " + err.what());
    }
  }
  return clouds;
}

}  // namespace geocnn
