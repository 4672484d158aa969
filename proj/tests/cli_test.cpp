// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "json.hpp"

namespace {

struct Result {
  int code;
  std::string output;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string("'") + ALKT_CLI_PATH + "' " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("alkt_cli_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string quick(const std::string& out) const {
    return std::string("run --config '") + ALKT_SOURCE_DIR +
           "/configs/blobs.toml' --distill.epochs 1 --dataset.per_class=60 --out '" + out + "'";
  }
  std::filesystem::path dir_;
};

TEST_F(Cli, RunWritesSevenRecords) {
  const auto r = cli(quick(dir_.string()));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string rec = slurp(dir_ / "proposed" / "run_0" / "records.csv");
  EXPECT_EQ(lines(rec), 8u);  // header + 7 budget points
  EXPECT_NE(r.output.find("test_acc"), std::string::npos);
}

TEST_F(Cli, RepeatShiftsSeedsAndRecordsOverrides) {
  const auto r = cli(quick(dir_.string()) + " --repeat 2 --seed 5");
  ASSERT_EQ(r.code, 0) << r.output;
  for (int i = 0; i < 2; ++i) {
    const auto m = nlohmann::json::parse(
        slurp(dir_ / "proposed" / ("run_" + std::to_string(i)) / "manifest.json"));
    EXPECT_EQ(m["seeds"]["data"], 5 + i);
    EXPECT_EQ(m["seeds"]["init"], 5 + i);
    EXPECT_EQ(m["seeds"]["strategy"], 5 + i);
    EXPECT_EQ(m["config"]["distill.epochs"], "1");
    EXPECT_EQ(m["config"]["dataset.per_class"], "60");
    EXPECT_EQ(m["repeat_index"], i);
  }
}

TEST_F(Cli, RerunFromManifestReproduces) {
  ASSERT_EQ(cli(quick((dir_ / "a").string())).code, 0);
  const auto manifest = dir_ / "a" / "proposed" / "run_0" / "manifest.json";
  const auto r = cli("run --config '" + manifest.string() + "' --out '" + (dir_ / "b").string() + "'");
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"records.csv", "bounds.csv", "selection_trace.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / "proposed" / "run_0" / f),
              slurp(dir_ / "b" / "proposed" / "run_0" / f))
        << f;
  }
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(cli("run --config /nonexistent.toml").code, 2);
  EXPECT_EQ(cli(quick(dir_.string()) + " --no.such 3").code, 2);
  EXPECT_EQ(cli(quick(dir_.string()) + " --strategy bald").code, 2);
  EXPECT_EQ(cli("run").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST_F(Cli, CompareAggregates) {
  ASSERT_EQ(cli(quick(dir_.string()) + " --strategy proposed,random").code, 0);
  const auto r = cli("compare '" + dir_.string() + "'");
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(dir_ / "compare.csv");
  EXPECT_EQ(lines(csv), 15u);  // header + 2 strategies x 7 points
  std::filesystem::create_directories(dir_ / "empty");
  EXPECT_EQ(cli("compare '" + (dir_ / "empty").string() + "'").code, 2);
}

TEST_F(Cli, Selftest) {
  const auto ok = cli("selftest");
  EXPECT_EQ(ok.code, 0) << ok.output;
  for (const char* name : {"gradient-mlp", "gradient-cnn", "kl-oracle", "kl-zero-floor",
                           "attention-transfer-oracle", "softmax-shift-invariance",
                           "sgd-step-oracle", "select-top-oracle", "pool-protocol",
                           "kcenter-oracle", "bound-check"}) {
    EXPECT_NE(ok.output.find(std::string("PASS ") + name), std::string::npos) << name;
  }
  const auto bad = cli("selftest --mutate kl-eps");
  EXPECT_EQ(bad.code, 1) << bad.output;
  EXPECT_NE(bad.output.find("FAIL kl-oracle"), std::string::npos);
}

TEST_F(Cli, HelpAndVersion) {
  const auto h = cli("--help");
  EXPECT_EQ(h.code, 0);
  for (const char* sub : {"run", "compare", "selftest"}) {
    EXPECT_NE(h.output.find(sub), std::string::npos);
  }
  const auto v = cli("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.output.find("1.0.0"), std::string::npos);
}

}  // namespace
