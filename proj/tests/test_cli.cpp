#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "zinbhmm/io/config.hpp"

namespace fs = std::filesystem;
using zinbhmm::io::Json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("zinbhmm_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!HasFailure()) fs::remove_all(dir_);
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string(ZINBHMM_CLI_PATH) + " " + args + " >" +
                            (dir_ / "stdout.txt").string() + " 2>" +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& rel, const std::string& text) const {
    std::ofstream(path(rel), std::ios::binary) << text;
  }

  void simulate(int patients = 4, int seed = 11) const {
    ASSERT_EQ(run("simulate --out " + path("sim") + " --patients " + std::to_string(patients) +
                  " --seed " + std::to_string(seed)),
              0)
        << slurp(path("stderr.txt"));
  }

  const std::string short_chain = " --iterations 60 --burn-in 30 --seed 5";
  fs::path dir_;
};

TEST_F(Cli, SimulateWritesDataTruthAndManifest) {
  simulate();
  EXPECT_TRUE(fs::exists(path("sim/data.txt")));
  EXPECT_TRUE(fs::exists(path("sim/truth.json")));
  const Json m = zinbhmm::io::load_json(path("sim/manifest.json"));
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["seed"], 11);
  EXPECT_EQ(slurp(path("sim/data.txt")).rfind("zinbhmm-dataset 1", 0), 0u);
}

TEST_F(Cli, SimulateReplicatesUseSubdirectories) {
  ASSERT_EQ(run("simulate --out " + path("sim") + " --patients 2 --replicates 2"), 0);
  EXPECT_TRUE(fs::exists(path("sim/replicate_001/data.txt")));
  EXPECT_TRUE(fs::exists(path("sim/replicate_002/truth.json")));
  EXPECT_NE(slurp(path("sim/replicate_001/data.txt")), slurp(path("sim/replicate_002/data.txt")));
}

TEST_F(Cli, FitScoresAgainstTruthAndReportReproducesIt) {
  simulate();
  ASSERT_EQ(run("fit --data " + path("sim/data.txt") + " --truth " + path("sim/truth.json") +
                " --out " + path("fit") + short_chain),
            0)
      << slurp(path("stderr.txt"));
  const Json report = zinbhmm::io::load_json(path("fit/report.json"));
  EXPECT_EQ(report["states"], 3);
  EXPECT_EQ(report["baseline_state"], 3);
  EXPECT_EQ(report["draws"], 30);
  ASSERT_TRUE(report.contains("truth_scores"));
  const double acc = report["truth_scores"]["states"]["accuracy"];
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);

  ASSERT_EQ(run("report --chain " + path("fit/chain.bin") + " --data " + path("sim/data.txt") +
                " --truth " + path("sim/truth.json") + " --out " + path("again/report.json")),
            0)
      << slurp(path("stderr.txt"));
  EXPECT_EQ(slurp(path("fit/report.json")), slurp(path("again/report.json")));
}

TEST_F(Cli, IdenticalFitsAreByteIdentical) {
  simulate();
  const std::string base = "fit --data " + path("sim/data.txt") + short_chain + " --out ";
  ASSERT_EQ(run(base + path("a")), 0);
  ASSERT_EQ(run(base + path("b")), 0);
  EXPECT_EQ(slurp(path("a/report.json")), slurp(path("b/report.json")));
  EXPECT_EQ(slurp(path("a/chain.bin")), slurp(path("b/chain.bin")));
  EXPECT_EQ(zinbhmm::io::load_json(path("a/manifest.json"))["config_hash"],
            zinbhmm::io::load_json(path("b/manifest.json"))["config_hash"]);

  ASSERT_EQ(run("fit --data " + path("sim/data.txt") +
                " --iterations 60 --burn-in 30 --seed 6 --out " + path("c")),
            0);
  EXPECT_NE(slurp(path("a/chain.bin")), slurp(path("c/chain.bin")));
}

TEST_F(Cli, ManifestReplayReproducesTheFit) {
  simulate();
  ASSERT_EQ(run("fit --data " + path("sim/data.txt") + short_chain + " --out " + path("a")), 0);
  ASSERT_EQ(run("fit --manifest " + path("a/manifest.json") + " --out " + path("b")), 0)
      << slurp(path("stderr.txt"));
  EXPECT_EQ(slurp(path("a/report.json")), slurp(path("b/report.json")));
}

TEST_F(Cli, ConfigFilesDriveTheFit) {
  simulate();
  write("model.json", R"({"states": 2, "baseline_state": 1})");
  write("chain.json", R"({"iterations": 50, "burn_in": 10, "thin": 2, "seed": 3})");
  ASSERT_EQ(run("fit --data " + path("sim/data.txt") + " --model " + path("model.json") +
                " --chain " + path("chain.json") + " --out " + path("fit")),
            0)
      << slurp(path("stderr.txt"));
  const Json report = zinbhmm::io::load_json(path("fit/report.json"));
  EXPECT_EQ(report["states"], 2);
  EXPECT_EQ(report["baseline_state"], 1);
  EXPECT_EQ(report["draws"], 20);
}

TEST_F(Cli, KGridWritesOneDirectoryPerStateCount) {
  simulate();
  ASSERT_EQ(run("fit --data " + path("sim/data.txt") + short_chain + " --k-grid 2:3 --out " +
                path("grid")),
            0)
      << slurp(path("stderr.txt"));
  for (const char* k : {"k2", "k3"}) {
    EXPECT_TRUE(fs::exists(path(std::string("grid/") + k + "/report.json")));
    EXPECT_TRUE(fs::exists(path(std::string("grid/") + k + "/chain.bin")));
  }
  const Json summary = zinbhmm::io::load_json(path("grid/k_grid.json"));
  ASSERT_EQ(summary["fits"].size(), 2u);
  EXPECT_EQ(summary["fits"][0]["states"], 2);
  EXPECT_EQ(summary["fits"][1]["states"], 3);
  const int best = summary["best_states"];
  const double d2 = summary["fits"][0]["dic"], d3 = summary["fits"][1]["dic"];
  EXPECT_EQ(best, d2 <= d3 ? 2 : 3);
  EXPECT_EQ(zinbhmm::io::load_json(path("grid/k2/report.json"))["baseline_state"], 2);
}

TEST_F(Cli, HomogeneousFitAddsIntercept) {
  simulate();
  ASSERT_EQ(run("fit --data " + path("sim/data.txt") + short_chain + " --homogeneous --out " +
                path("fit")),
            0)
      << slurp(path("stderr.txt"));
  const Json report = zinbhmm::io::load_json(path("fit/report.json"));
  EXPECT_EQ(report["covariates"][0], "intercept");
}

TEST_F(Cli, ReplicateStudyWritesTables) {
  write("study.json", R"({
    "seed": 4, "replicates": 2,
    "simulation": {"patients": 3},
    "chain": {"iterations": 40, "burn_in": 20},
    "scenarios": [{"name": "nhmm"}, {"name": "hhmm", "homogeneous": true}]
  })");
  ASSERT_EQ(run("replicate-study --config " + path("study.json") + " --threads 1 --out " +
                path("study")),
            0)
      << slurp(path("stderr.txt"));
  for (const char* f : {"study.json", "latent_states.tsv", "selection.tsv", "manifest.json"})
    EXPECT_TRUE(fs::exists(path(std::string("study/") + f))) << f;
  std::istringstream latent(slurp(path("study/latent_states.tsv")));
  int lines = 0;
  for (std::string line; std::getline(latent, line);) ++lines;
  EXPECT_EQ(lines, 3);
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("fit --out " + path("x") + " --bogus"), 2);
  EXPECT_EQ(run("fit --out " + path("x")), 2);
  EXPECT_EQ(run("simulate --out " + path("x") + " --replicates 0"), 2);
  simulate();
  EXPECT_EQ(run("fit --data " + path("sim/data.txt") + " --k-grid 3:2 --out " + path("x")), 2);
  EXPECT_EQ(run("fit --data " + path("sim/data.txt") + " --iterations 10 --burn-in 20 --out " +
                path("x")),
            2);
  write("model.json", R"({"states": 3, "colour": "blue"})");
  EXPECT_EQ(run("fit --data " + path("sim/data.txt") + " --model " + path("model.json") +
                " --out " + path("x")),
            2);
  EXPECT_NE(slurp(path("stderr.txt")).find("colour"), std::string::npos);
  write("broken.json", "{\"states\": ");
  EXPECT_EQ(run("fit --data " + path("sim/data.txt") + " --model " + path("broken.json") +
                " --out " + path("x")),
            2);
}

TEST_F(Cli, DataErrorsExitWithThree) {
  EXPECT_EQ(run("fit --data " + path("missing.txt") + " --out " + path("x")), 3);
  write("bad.txt", "zinbhmm-dataset 1\npatients 1\ncovariates 1 X1\npatient 1 2\n3 0.5\nfour 1\n");
  EXPECT_EQ(run("fit --data " + path("bad.txt") + " --out " + path("x")), 3);
  write("neg.txt", "not a dataset\n");
  EXPECT_EQ(run("fit --data " + path("neg.txt") + " --out " + path("x")), 3);

  simulate();
  ASSERT_EQ(run("fit --data " + path("sim/data.txt") + short_chain + " --out " + path("a")), 0);
  ASSERT_EQ(run("simulate --out " + path("other") + " --patients 2 --seed 99"), 0);
  EXPECT_EQ(run("report --chain " + path("a/chain.bin") + " --data " + path("other/data.txt") +
                " --out " + path("r.json")),
            3);
  write("chain.bin", "garbage");
  EXPECT_EQ(run("report --chain " + path("chain.bin") + " --data " + path("sim/data.txt") +
                " --out " + path("r.json")),
            3);
}

TEST_F(Cli, VersionFlag) {
  EXPECT_EQ(run("--version"), 0);
  EXPECT_FALSE(slurp(path("stdout.txt")).empty());
}

}  // namespace
