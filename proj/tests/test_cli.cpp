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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GEOCNN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("geocnn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataWritesDeterministicCorpus) {
  ASSERT_EQ(run("--seed 1 gen-data --out " + p("a") + " --per-class 50 --points 64", p("log")), 0)
      << slurp(p("log"));
  ASSERT_EQ(run("--seed 1 gen-data --out " + p("b") + " --per-class 50 --points 64", p("log")), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(p("a"))) {
    if (e.path().extension() != ".gpc") continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(p("b")) / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 200u);
  EXPECT_EQ(slurp(p("a") + "/manifest.csv"), slurp(p("b") + "/manifest.csv"));
  EXPECT_TRUE(fs::exists(p("a") + "/sphere_0049.gpc"));
  EXPECT_FALSE(fs::exists(p("a") + "/sphere_0050.gpc"));
}

TEST_F(Cli, InvalidArgumentsExitOne) {
  EXPECT_EQ(run("gen-data --out " + p("x") + " --per-class 0", p("log")), 1);
  EXPECT_EQ(run("gen-data --out " + p("x") + " --bogus", p("log")), 1);
  EXPECT_EQ(run("gen-data --out " + p("x") + " --classes sphere,torus", p("log")), 1);
  EXPECT_EQ(run("frobnicate", p("log")), 1);
  EXPECT_EQ(run("eval --checkpoint /nonexistent.gck --test /nonexistent.csv", p("log")), 1);
  EXPECT_EQ(run("gradcheck --scope everything", p("log")), 1);
}

TEST_F(Cli, GradcheckPasses) {
  EXPECT_EQ(run("--seed 2 gradcheck --scope geoconv", p("log")), 0) << slurp(p("log"));
  EXPECT_EQ(run("--seed 2 gradcheck --scope ops", p("log")), 0) << slurp(p("log"));
}

TEST_F(Cli, GradcheckImpossibleToleranceExitsTwo) {
  EXPECT_EQ(run("gradcheck --scope ops --tolerance 1e-300", p("log")), 2) << slurp(p("log"));
}

TEST_F(Cli, TrainThenEvalAgree) {
  ASSERT_EQ(run("--seed 3 gen-data --out " + p("train") +
                    " --classes sphere,cube,cone --per-class 4 --points 48",
                p("log")),
            0);
  ASSERT_EQ(run("--seed 4 gen-data --out " + p("test") +
                    " --classes sphere,cube,cone --per-class 2 --points 48",
                p("log")),
            0);
  ASSERT_EQ(run("--seed 5 train --preset micro --epochs 2 --batch-size 4 --train " + p("train") +
                    "/manifest.csv --test " + p("test") + "/manifest.csv --out " + p("run"),
                p("log")),
            0)
      << slurp(p("log"));
  for (const char* f : {"model.gck", "history.csv", "summary.json", "confusion.csv"}) {
    EXPECT_TRUE(fs::exists(p("run") + "/" + f)) << f;
  }
  ASSERT_EQ(run("eval --checkpoint " + p("run") + "/model.gck --test " + p("test") +
                    "/manifest.csv --out " + p("eval"),
                p("log")),
            0)
      << slurp(p("log"));
  EXPECT_EQ(slurp(p("run") + "/confusion.csv"), slurp(p("eval") + "/eval_confusion.csv"));
  EXPECT_EQ(run("eval --checkpoint " + p("train") + "/manifest.csv --test " + p("test") +
                    "/manifest.csv",
                p("log")),
            1);
}

TEST_F(Cli, BenchSmallRun) {
  for (const char* op : {"ball-query", "geoconv-fwd", "geoconv-bwd"}) {
    EXPECT_EQ(run(std::string("bench --op ") + op + " --n 64 --repeat 1", p("log")), 0)
        << op << "\n" << slurp(p("log"));
    EXPECT_EQ(run(std::string("bench --op ") + op + " --n 1 --repeat 2", p("log")), 0) << op;
  }
  EXPECT_EQ(run("bench --op matmul", p("log")), 1);
}

TEST_F(Cli, BenchChecksumStableAcrossRepeats) {
  auto checksums = [&](const std::string& repeat) {
    EXPECT_EQ(run("--seed 8 bench --op geoconv-bwd --n 200 --repeat " + repeat, p("log")), 0);
    std::istringstream in(slurp(p("log")));
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.starts_with("geoconv-bwd,")) out += line.substr(line.rfind(',') + 1) + "\n";
    }
    return out;
  };
  const auto a = checksums("1");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, checksums("5"));
}
