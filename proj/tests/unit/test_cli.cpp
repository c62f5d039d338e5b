#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deconfound/datagen.hpp"
#include "deconfound/dataset_io.hpp"
#include "deconfound/harness.hpp"
#include "deconfound_cli/cli.hpp"

namespace fs = std::filesystem;
using namespace deconfound;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "deconfound-lab");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(DECONFOUND_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes obs.csv, rct1.csv (n=200) and rct2.csv for the quadratic scenario.
void write_inputs(const fs::path& dir, bool include_u = true) {
  auto spec = ScenarioSpec::defaults(Shape::Quadratic);
  spec.rct_sizes[0] = 200;
  write_observational_csv((dir / "obs.csv").string(),
                          gen_observational(spec, {3, 1, kRoleObservational, 0}), include_u);
  write_rct_csv((dir / "rct1.csv").string(), gen_rct(1, spec, {3, 1, role_trial(1), 0}));
  write_rct_csv((dir / "rct2.csv").string(), gen_rct(2, spec, {3, 1, role_trial(2), 0}));
}

}  // namespace

TEST(Cli, SimulateWritesOneCellPerMethod) {
  const auto dir = fresh_dir("sim");
  const auto r = run({"simulate", "--scenario", "quadratic", "--n1", "100", "--reps", "50",
                      "--seed", "7", "--workers", "2", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  std::ifstream in(dir / "results.csv");
  const auto set = read_results_csv(in);
  EXPECT_EQ(set.results.size(), 100u);
  const auto table = summarize(set);
  EXPECT_EQ(table.regions.size(), 2u * std::size(kAllRegions));
  EXPECT_TRUE(fs::exists(dir / "summary.csv"));
  EXPECT_NE(r.out.find("outside_both"), std::string::npos) << r.out;
}

TEST(Cli, SimulateIsSeedDeterministic) {
  const auto a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
  const std::vector<std::string> common{"simulate", "--scenario", "linear", "--n1", "100",
                                        "--reps", "3", "--seed", "11"};
  auto args = common;
  args.insert(args.end(), {"--workers", "1", "--out", a.string()});
  ASSERT_EQ(run(args).code, 0);
  args = common;
  args.insert(args.end(), {"--workers", "3", "--out", b.string()});
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
}

TEST(Cli, ZeroReplicationsIsAValidationError) {
  const auto dir = fresh_dir("sim_zero");
  const auto r = run({"simulate", "--reps", "0", "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, BadFlagsAreUsageErrors) {
  EXPECT_EQ(run({"simulate", "--scenario", "cubic"}).code, cli::kValidation);
  EXPECT_EQ(run({"simulate", "--n1", "100,x"}).code, cli::kValidation);
  EXPECT_EQ(run({"simulate", "--grid", "3:-3:0.1"}).code, cli::kValidation);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kValidation);
  EXPECT_EQ(run({}).code, cli::kValidation);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("simulate"), std::string::npos);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  const auto dir = fresh_dir("cfg");
  {
    std::ofstream cfg(dir / "c.json");
    cfg << R"({"scenario": "linear", "n1": [100], "reps": 2, "seed": 5, "mode": "single",
               "spec": {"noise_sd": 0.5}})";
  }
  const auto out = dir / "run";
  auto r = run({"simulate", "--config", (dir / "c.json").string(), "--reps", "3", "--workers",
                "1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out / "results.csv");
  const auto set = read_results_csv(in);
  EXPECT_EQ(set.results.size(), 3u);  // flag beat config reps=2
  for (const auto& res : set.results) {
    EXPECT_EQ(res.scenario, "linear");
    EXPECT_EQ(res.method, Method::Rct1Only);
  }

  {
    std::ofstream cfg(dir / "bad.json");
    cfg << R"({"reps": 2, "colour": "red"})";
  }
  r = run({"simulate", "--config", (dir / "bad.json").string(), "--out", out.string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST(Cli, DumpWritesReplicationZeroData) {
  const auto dir = fresh_dir("dump");
  const auto r = run({"simulate", "--scenario", "linear", "--n1", "100", "--reps", "1",
                      "--workers", "1", "--out", dir.string(), "--dump", (dir / "d").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_rct_csv((dir / "d" / "rct1_linear_n100.csv").string(), 1).size(), 100u);
  EXPECT_EQ(read_observational_csv((dir / "d" / "obs_linear.csv").string()).k_trials(), 2u);
}

TEST(Cli, FitHierarchicalEstimatesBothTrials) {
  const auto dir = fresh_dir("fit_h");
  write_inputs(dir);
  const auto out = dir / "out";
  const auto r = run({"fit", "--obs", (dir / "obs.csv").string(), "--rct",
                      (dir / "rct1.csv").string(), "--rct", (dir / "rct2.csv").string(), "--mode",
                      "hierarchical", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = nlohmann::json::parse(slurp(out / "eta_model.json"));
  EXPECT_EQ(model.at("mode"), "hierarchical");
  EXPECT_EQ(model.at("gamma").size(), 2u);

  std::ifstream curve(out / "tau1_curve.csv");
  std::string line;
  std::getline(curve, line);
  std::getline(curve, line);
  EXPECT_EQ(line, "x,omega,eta,tau");
  std::size_t rows = 0;
  while (std::getline(curve, line)) ++rows;
  EXPECT_EQ(rows, 121u);
}

TEST(Cli, FitSingleAndMissingU) {
  const auto dir = fresh_dir("fit_s");
  write_inputs(dir, /*include_u=*/false);
  const auto r = run({"fit", "--obs", (dir / "obs.csv").string(), "--rct",
                      (dir / "rct1.csv").string(), "--mode", "single", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = nlohmann::json::parse(slurp(dir / "eta_model.json"));
  EXPECT_EQ(model.at("mode"), "single");
}

TEST(Cli, FitHierarchicalNeedsTwoTrials) {
  const auto dir = fresh_dir("fit_one");
  write_inputs(dir);
  const auto r = run({"fit", "--obs", (dir / "obs.csv").string(), "--rct",
                      (dir / "rct1.csv").string(), "--mode", "hierarchical", "--out",
                      dir.string()});
  EXPECT_EQ(r.code, cli::kValidation);
}

TEST(Cli, FitMissingInputIsIoError) {
  const auto dir = fresh_dir("fit_io");
  const auto r = run({"fit", "--obs", (dir / "nope.csv").string(), "--rct",
                      (dir / "nope1.csv").string(), "--mode", "single"});
  EXPECT_EQ(r.code, cli::kIo);
}

TEST(Cli, OraclePrintsClosedForms) {
  const auto r = run({"oracle", "--scenario", "linear"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc.at("linear").at("curves").at("eta1"), nlohmann::json({2.0, -1.0}));
  EXPECT_FALSE(doc.at("linear").contains("brute_force"));
  EXPECT_FALSE(doc.contains("quadratic"));
}

TEST(Cli, OracleRejectsSmallBruteForce) {
  EXPECT_EQ(run({"oracle", "--brute-force", "--n", "1000"}).code, cli::kValidation);
}

TEST(Cli, SummarizeIsReproducible) {
  const auto dir = fresh_dir("summ");
  ASSERT_EQ(run({"simulate", "--scenario", "quadratic", "--n1", "100", "--reps", "4",
                 "--workers", "1", "--out", dir.string()})
                .code,
            0);
  const auto a = dir / "a", b = dir / "b";
  ASSERT_EQ(run({"summarize", (dir / "results.csv").string(), "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"summarize", (dir / "results.csv").string(), "--out", b.string()}).code, 0);
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(dir / "summary.csv"));
}

TEST(Cli, UnwritableOutputIsIoError) {
  const auto dir = fresh_dir("ro");
  {
    std::ofstream blocker(dir / "file");
    blocker << "x";
  }
  const auto r = run({"simulate", "--reps", "1", "--n1", "100", "--scenario", "linear", "--out",
                      (dir / "file" / "sub").string()});
  EXPECT_EQ(r.code, cli::kIo);
}
