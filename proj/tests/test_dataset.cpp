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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "geocnn/dataset.hpp"
#include "geocnn/error.hpp"

using namespace geocnn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("geocnn_ds_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Manifest, RoundTripAndLoad) {
  const auto dir = fresh_dir("roundtrip");
  DatasetManifest m;
  m.class_names = {"sphere", "cube"};
  for (int i = 0; i < 4; ++i) {
    const std::string name = "c" + std::to_string(i) + ".gpc";
    save_cloud(synth_shape(ShapeKind::kSphere, 16, 0.0, i), dir / name);
    m.entries.push_back({name, i % 2});
  }
  save_manifest(m, dir / "manifest.csv");
  const auto back = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.entries.size(), 4u);
  EXPECT_EQ(back.class_names, m.class_names);
  EXPECT_EQ(back.entries[3].path, fs::path("c3.gpc"));
  EXPECT_EQ(back.entries[3].label, 1);

  // Manifest labels override the label stored in each file.
  const auto clouds = load_dataset(back, dir);
  ASSERT_EQ(clouds.size(), 4u);
  EXPECT_EQ(clouds[1].label(), 1);
  EXPECT_EQ(clouds[2].label(), 0);
}

TEST(Manifest, RejectsLabelsOutsideClasses) {
  DatasetManifest m;
  m.class_names = {"a"};
  m.entries.push_back({"x.gpc", 1});
  EXPECT_THROW(m.validate(), ConfigError);
  m.entries[0].label = -1;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Manifest, BadHeaderAndMissingFiles) {
  const auto dir = fresh_dir("bad");
  { std::ofstream(dir / "manifest.csv") << "file,class\nx.gpc,0\n"; }
  { std::ofstream(dir / "classes.txt") << "a\n"; }
  EXPECT_THROW(load_manifest(dir / "manifest.csv"), ConfigError);
  EXPECT_THROW(load_manifest(dir / "missing.csv"), IoError);

  { std::ofstream(dir / "manifest.csv") << "path,label\nx.gpc,0\n"; }
  const auto m = load_manifest(dir / "manifest.csv");
  try {
    load_dataset(m, dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("x.gpc"), std::string::npos) << e.what();
  }
}

TEST(Manifest, CorruptFileErrorNamesPath) {
  const auto dir = fresh_dir("corrupt");
  { std::ofstream(dir / "bad.gpc", std::ios::binary) << "GPC1\x01"; }
  { std::ofstream(dir / "manifest.csv") << "path,label\nbad.gpc,0\n"; }
  { std::ofstream(dir / "classes.txt") << "a\n"; }
  try {
    load_dataset(load_manifest(dir / "manifest.csv"), dir);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.gpc"), std::string::npos) << e.what();
  }
}
