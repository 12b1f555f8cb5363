// Runs the defog and dfrun executables as separate processes.
#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result sh(const std::string& command) {
  Result r;
  FILE* p = ::popen((command + " 2>&1").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, got);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return r;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Drops the wall_ms column, which is real time on the tcp backend.
std::string without_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("defog_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string file(const std::string& name) const { return (dir_ / name).string(); }
  static std::string defog() { return DEFOG_CLI_PATH; }
  static std::string dfrun() { return DFRUN_PATH; }
  static std::string config(const std::string& name) { return std::string(CONFIG_DIR) + "/" + name; }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(Cli, CostTable) {
  const auto r = sh(defog() + " cost -n 16");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("partial_avg,16,1e+06,1e+09,0.001,0.002\n"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("ring_allreduce,16,1e+06,1e+09,0.001,0.034\n"), std::string::npos) << r.output;
}

TEST_F(Cli, RunIsByteStable) {
  ASSERT_EQ(sh(defog() + " run " + config("dgd.cfg") + " -o " + file("a.csv")).code, 0);
  ASSERT_EQ(sh(defog() + " run " + config("dgd.cfg") + " -o " + file("b.csv")).code, 0);
  const auto a = slurp(file("a.csv"));
  EXPECT_GT(a.size(), 100u);
  EXPECT_EQ(a, slurp(file("b.csv")));
  EXPECT_EQ(a.substr(0, a.find('\n')), "iter,rank,residual_to_opt,consensus_residual,wall_ms");
}

TEST_F(Cli, DfrunTcpMatchesTheSimulator) {
  ASSERT_EQ(sh(defog() + " run " + config("dgd.cfg") + " -n 4 -o " + file("sim.csv")).code, 0);
  const auto r = sh(dfrun() + " -n 4 -- " + defog() + " run " + config("dgd.cfg") + " -n 4 -o " + file("tcp.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(without_time(slurp(file("sim.csv"))), without_time(slurp(file("tcp.csv"))));
}

TEST_F(Cli, DfrunSimBackendRunsInProcess) {
  ASSERT_EQ(sh(defog() + " run " + config("dgd.cfg") + " -n 4 -o " + file("direct.csv")).code, 0);
  const auto r = sh(dfrun() + " -n 4 --backend sim -- " + defog() + " run " + config("dgd.cfg") + " -n 4 -o " +
                    file("launched.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(without_time(slurp(file("direct.csv"))), without_time(slurp(file("launched.csv"))));
}

TEST_F(Cli, DfrunBenchOverTcp) {
  const auto r = sh(dfrun() + " -n 4 -- " + defog() + " bench --op dynamic_neighbor_allreduce --payload 8192");
  ASSERT_EQ(r.code, 0) << r.output;
  // one-peer: n messages of M bytes per round, 10 rounds
  EXPECT_NE(r.output.find("dynamic_neighbor_allreduce,tcp,4,8192,10,"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find(",40,327680,"), std::string::npos) << r.output;
}

TEST_F(Cli, DfrunReportsTheFailingRankAndStopsTheOthers) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = sh(dfrun() + " -n 3 --grace 1 -- sh -c 'if [ \"$DEFOG_RANK\" = 1 ]; then exit 3; fi; sleep 60'");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("rank 1 exited with status 3"), std::string::npos) << r.output;
  EXPECT_LT(secs, 20.0);
}

TEST_F(Cli, DfrunForwardsTermination) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = sh("timeout -s TERM 1 " + dfrun() + " -n 2 --grace 1 -- sh -c 'sleep 60'");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(r.code, 124) << r.output;
  EXPECT_LT(secs, 10.0);
}

TEST_F(Cli, DfrunPassesRankEnvironment) {
  const auto r = sh(dfrun() + " -n 3 -- sh -c 'echo \"r=$DEFOG_RANK s=$DEFOG_SIZE b=$DEFOG_BACKEND\"'");
  ASSERT_EQ(r.code, 0) << r.output;
  for (int i = 0; i < 3; ++i)
    EXPECT_NE(r.output.find("r=" + std::to_string(i) + " s=3 b=tcp"), std::string::npos) << r.output;
}

TEST_F(Cli, ConfigErrorsAreReported) {
  std::ofstream(file("bad.cfg")) << "[experiment]\nalgorithm = dgd\niters = many\n";
  auto r = sh(defog() + " run " + file("bad.cfg"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;

  std::ofstream(file("unknown.cfg")) << "[experiment]\nalgorithm = sgd_plus\n";
  r = sh(defog() + " run " + file("unknown.cfg"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("exact_diffusion"), std::string::npos) << r.output;

  r = sh(dfrun() + " -n 2 -- " + defog() + " run " + file("unknown.cfg") + " -n 2");
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, FishDemoWritesATrajectory) {
  const auto r = sh(defog() + " demo-fish -n 6 --iters 50 -o " + file("fish.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto csv = slurp(file("fish.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,rank,pos_x,pos_y,est_x,est_y");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 51 * 6);
}

TEST_F(Cli, ConsensusDemoConverges) {
  const auto r = sh(defog() + " demo-consensus -n 4 -o " + file("c.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto at = r.output.find("final_residual=");
  ASSERT_NE(at, std::string::npos) << r.output;
  EXPECT_LT(std::stod(r.output.substr(at + 15)), 1e-6) << r.output;
}

TEST_F(Cli, ShippedConfigsRun) {
  for (const auto& entry : std::filesystem::directory_iterator(CONFIG_DIR)) {
    const auto r = sh(defog() + " run " + entry.path().string() + " -o " + file("out.csv"));
    EXPECT_EQ(r.code, 0) << entry.path() << "\n" << r.output;
  }
}
