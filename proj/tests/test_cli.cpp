#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "spheremix/io.hpp"

using namespace spheremix;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
};

Invocation run(const std::string& args) {
  const std::string cmd = std::string(SPHEREMIX_CLI_PATH) + " " + args + " 2>/dev/null";
  Invocation r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("spheremix_cli_" + std::to_string(::getpid()));
    fs::create_directories(root_);
    ASSERT_EQ(run("simulate --n 200 --seed 3 --out " + (root_ / "sim").string()).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string at(const std::string& rel) { return (root_ / rel).string(); }
  static inline fs::path root_;
};

}  // namespace

TEST_F(Cli, SimulateWritesDataTruthAndManifest) {
  const io::LoadedData d = io::load_points(io::read_csv(at("sim/data.csv")));
  EXPECT_EQ(d.data.size(), 200u);
  EXPECT_EQ(io::read_labels(at("sim/truth.csv")).size(), 200u);
  const io::json m = io::read_json(at("sim/manifest.json"));
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["seed"], 3);
  ASSERT_EQ(run("simulate --n 200 --seed 3 --out " + at("sim_again")).code, 0);
  EXPECT_EQ(slurp(at("sim/data.csv")), slurp(at("sim_again/data.csv")));
}

TEST_F(Cli, FitIsReproducibleAndRecoversClusters) {
  const std::string args = "fit " + at("sim/data.csv") + " --k 2 --starts 2 --seed 5 --out ";
  ASSERT_EQ(run(args + at("fit_a")).code, 0);
  ASSERT_EQ(run(args + at("fit_b")).code, 0);
  EXPECT_EQ(slurp(at("fit_a/model.json")), slurp(at("fit_b/model.json")));
  EXPECT_EQ(slurp(at("fit_a/labels.csv")), slurp(at("fit_b/labels.csv")));
  const io::json m = io::read_json(at("fit_a/model.json"));
  EXPECT_EQ(m["K"], 2);
  EXPECT_EQ(m["n"], 200);
  const Invocation e = run("eval " + at("fit_a/labels.csv") + " " + at("sim/truth.csv"));
  ASSERT_EQ(e.code, 0);
  EXPECT_GE(std::stod(e.out), 0.8);
  EXPECT_EQ(io::read_json(at("fit_a/manifest.json"))["config"]["k"], 2);
}

TEST_F(Cli, SingleComponentWeights) {
  ASSERT_EQ(run("fit " + at("sim/data.csv") + " --k 1 --kind sespc --out " + at("fit1")).code, 0);
  const io::json m = io::read_json(at("fit1/model.json"));
  ASSERT_EQ(m["weights"].size(), 1u);
  EXPECT_EQ(m["weights"][0].get<double>(), 1.0);
  EXPECT_EQ(slurp(at("fit1/model.json")).find("\"weights\": [\n    1.0\n  ]") != std::string::npos, true);
}

TEST_F(Cli, SelectWritesIclTable) {
  ASSERT_EQ(run("select " + at("sim/data.csv") + " --kmax 3 --starts 1 --seed 2 --out " + at("sel")).code, 0);
  const io::Table t = io::read_csv(at("sel/icl_table.csv"));
  ASSERT_EQ(t.values.rows(), 3);
  EXPECT_EQ(t.names, (std::vector<std::string>{"K", "loglik", "bic", "icl", "nu"}));
  Eigen::Index best = 0;
  t.values.col(3).minCoeff(&best);
  EXPECT_EQ(io::read_json(at("sel/model.json"))["K"], t.values(best, 0));
  EXPECT_EQ(io::read_json(at("sel/model.json"))["K"], 2);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(t.values(i, 4), 5 * t.values(i, 0) + t.values(i, 0) - 1);
}

TEST_F(Cli, ProjectAndEval) {
  ASSERT_EQ(run("simulate --kind general --dim 6 --n 100 --seed 1 --out " + at("gen")).code, 0);
  ASSERT_EQ(run("project " + at("gen/data.csv") + " --out " + at("proj")).code, 0);
  const io::LoadedData p = io::load_points(io::read_csv(at("proj/projected.csv")));
  EXPECT_EQ(p.data.dim(), 3);
  EXPECT_FALSE(p.renormalized);
  EXPECT_EQ(io::read_csv(at("proj/basis.csv")).values.rows(), 6);
  const Invocation e = run("eval " + at("sim/truth.csv") + " " + at("sim/truth.csv"));
  EXPECT_EQ(e.out, "1.000000\n");
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("fit").code, 2);
  EXPECT_EQ(run("fit " + at("sim/data.csv") + " --kind vmf --out " + at("x")).code, 2);
  EXPECT_EQ(run("select " + at("sim/data.csv") + " --kmin 3 --kmax 2 --out " + at("x")).code, 2);
  EXPECT_EQ(run("fit " + at("missing.csv") + " --k 2 --out " + at("x")).code, 3);
  std::ofstream(at("bad.csv")) << "x,y,z\n1,0,0\n1,0\n";
  EXPECT_EQ(run("fit " + at("bad.csv") + " --k 2 --out " + at("x")).code, 3);
  std::ofstream(at("zero.csv")) << "x,y,z\n1,0,0\n0,0,0\n";
  EXPECT_EQ(run("fit " + at("zero.csv") + " --k 2 --out " + at("x")).code, 3);
  EXPECT_EQ(run("fit " + at("sim/data.csv") + " --k 150 --out " + at("x")).code, 4);
}
