// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "isps/cli.hpp"

using namespace isps;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("isps_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "isps_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int rc = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, ExitCodesFollowVerdicts) {
  auto d = scratch("codes");
  EXPECT_EQ(run({"analyze", "linear", "--property", "isps", "--set", "origin", "--out", d.string()}), 0);
  EXPECT_TRUE(fs::exists(d / "linear_isps.json"));
  auto report = nlohmann::json::parse(slurp(d / "linear_isps.json"));
  EXPECT_EQ(report["verdict"], "consistent");
  EXPECT_TRUE(report.contains("certificate"));
  EXPECT_TRUE(report["runtime_s"].is_null());
  EXPECT_EQ(run({"analyze", "integrator", "--property", "isps", "--set", "origin", "--out", d.string()}), 2);
  EXPECT_TRUE(fs::exists(d / "integrator_isps_witness.csv"));
  EXPECT_EQ(slurp(d / "summary.csv").substr(0, 38), "system,property,set,verdict,parameters");
}

TEST(Cli, UsageErrors) {
  auto d = scratch("usage");
  std::string text;
  EXPECT_EQ(run({"analyze", "nope", "--out", d.string()}, &text), 1);
  EXPECT_NE(text.find("saturated-bias"), std::string::npos);
  EXPECT_EQ(run({"analyze", "linear", "--property", "xyz", "--out", d.string()}, &text), 1);
  EXPECT_NE(text.find("ulim"), std::string::npos);
  EXPECT_EQ(run({"analyze", "linear", "--set", "point:1,2", "--out", d.string()}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"frobnicate"}), 1);
}

TEST(Cli, ConfigFileAndOverrides) {
  auto d = scratch("config");
  fs::create_directories(d);
  {
    std::ofstream cfg(d / "run.cfg");
    cfg << "# linear run\nproperty = brs\nbound = 1.5\nseed = 3\nn_states = 2\n";
  }
  EXPECT_EQ(run({"analyze", "linear", "--config", (d / "run.cfg").string(), "--out", d.string()}), 0);
  auto report = nlohmann::json::parse(slurp(d / "linear_brs.json"));
  EXPECT_EQ(report["parameters"]["C"], 1.5);
  EXPECT_EQ(report["seed"], 3);
  {
    std::ofstream cfg(d / "bad.cfg");
    cfg << "colour = blue\n";
  }
  std::string text;
  EXPECT_EQ(run({"analyze", "linear", "--config", (d / "bad.cfg").string(), "--out", d.string()}, &text), 1);
  EXPECT_NE(text.find("colour"), std::string::npos);
  cli::RunConfig c;
  std::istringstream in("radii = 1, 2,3\nrecord_runtime = yes\n");
  cli::load_config(c, in);
  EXPECT_EQ(c.radii, (std::vector<double>{1, 2, 3}));
  EXPECT_TRUE(c.record_runtime);
  std::istringstream bad("seed = -1\n");
  EXPECT_THROW(cli::load_config(c, bad), ConfigError);
}

TEST(Cli, ByteIdenticalAcrossWorkers) {
  auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run({"analyze", "planar-limit-cycle", "--property", "cuag", "--seed", "7", "--out", a.string()}), 0);
  ASSERT_EQ(run({"analyze", "planar-limit-cycle", "--property", "cuag", "--seed", "7", "--workers", "8",
                 "--out", b.string()}),
            0);
  EXPECT_EQ(slurp(a / "planar-limit-cycle_cuag.json"), slurp(b / "planar-limit-cycle_cuag.json"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
}

TEST(Cli, FalsifyReadsReports) {
  auto d = scratch("falsify");
  ASSERT_EQ(run({"analyze", "linear", "--property", "isps", "--set", "origin", "--out", d.string()}), 0);
  EXPECT_EQ(run({"falsify", "linear", "--certificate", (d / "linear_isps.json").string(), "--out", d.string()}), 0);
  auto report = nlohmann::json::parse(slurp(d / "linear_isps.json"));
  report["certificate"]["c"] = 0.0;
  report["certificate"]["beta"] = nlohmann::json(KLFunction::linear_exponential(0.5, 1.0));
  std::ofstream(d / "weak.json") << report.dump();
  EXPECT_EQ(run({"falsify", "linear", "--certificate", (d / "weak.json").string(), "--out", d.string()}), 2);
  EXPECT_EQ(run({"falsify", "linear", "--certificate", (d / "missing.json").string(), "--out", d.string()}), 1);
}

TEST(Cli, SetSpecs) {
  auto e = find_system("planar-limit-cycle");
  EXPECT_EQ(cli::parse_set("origin", e).points().front(), (StateVector{0.0, 0.0}));
  auto b = cli::parse_set("ball:2:1,1", e);
  EXPECT_EQ(b.inflation(), 2.0);
  EXPECT_EQ(b.points().front(), (StateVector{1.0, 1.0}));
  EXPECT_EQ(cli::parse_set("ball:1", e).inflation(), 1.0);
  EXPECT_THROW(cli::parse_set("ball:-1", e), ConfigError);
  EXPECT_THROW(cli::parse_set("blob", e), ConfigError);
}
