#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("gfen_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run("synth --nodes 6 --days 2 --seed 2 --out-dir " + (dir_ / "data").string()), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static int run(const std::string& args) {
    const std::string cmd = std::string(GFEN_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static std::string data() { return " --data " + (dir_ / "data").string(); }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpForEverySubcommand) {
  EXPECT_EQ(run("--help"), 0);
  for (const char* sub : {"inspect-period", "build-graphs", "train", "evaluate", "robustness", "ablate", "synth"}) {
    EXPECT_EQ(run(std::string(sub) + " --help"), 0) << sub;
    EXPECT_NE(slurp(dir_ / "stdout.txt").find("--"), std::string::npos) << sub;
  }
}

TEST_F(Cli, UnknownFlagIsAUsageError) { EXPECT_EQ(run("train --bogus 3" + data()), 2); }

TEST_F(Cli, MissingFileExitsTwo) {
  EXPECT_EQ(run("inspect-period --data " + (dir_ / "nowhere").string()), 2);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("error:"), std::string::npos);
}

TEST_F(Cli, ConstantDataHasNoPeriod) {
  const fs::path flat = dir_ / "flat";
  fs::create_directories(flat);
  std::ofstream(flat / "speed.csv") << "50,50,50,50,50,50,50,50\n50,50,50,50,50,50,50,50\n";
  std::ofstream(flat / "adj.csv") << "0,1\n1,0\n";
  EXPECT_EQ(run("inspect-period --out-dir " + (dir_ / "o").string() + " --data " + flat.string()), 2);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("no period detected"), std::string::npos);
}

TEST_F(Cli, InspectPeriodWritesSpectrum) {
  const fs::path out = dir_ / "inspect";
  ASSERT_EQ(run("inspect-period -q --out-dir " + out.string() + data()), 0);
  EXPECT_TRUE(fs::exists(out / "spectrum.csv"));
  EXPECT_TRUE(fs::exists(out / "inspect-period.manifest.json"));
}

TEST_F(Cli, TrainEvaluateRobustness) {
  const fs::path out = dir_ / "run";
  const std::string common = " -q --out-dir " + out.string() + data();
  ASSERT_EQ(run("train --epochs 2 --hidden 4 --no-early-stop" + common), 0) << slurp(dir_ / "stderr.txt");
  EXPECT_TRUE(fs::exists(out / "model.json"));
  EXPECT_TRUE(fs::exists(out / "trace.csv"));
  EXPECT_TRUE(fs::exists(out / "scale.txt"));

  ASSERT_EQ(run("evaluate --ckpt " + (out / "model.json").string() + common), 0) << slurp(dir_ / "stderr.txt");
  std::ifstream metrics(out / "metrics.csv");
  std::string header, values;
  std::getline(metrics, header);
  std::getline(metrics, values);
  EXPECT_EQ(header, "rmse,mae,acc,r2,var");
  EXPECT_EQ(std::count(values.begin(), values.end(), ','), 4);

  ASSERT_EQ(run("robustness --kind poisson --params 1,4 --ckpt " + (out / "model.json").string() + common), 0);
  std::ifstream rob(out / "robustness.csv");
  std::string line;
  int lines = 0;
  while (std::getline(rob, line)) ++lines;
  EXPECT_EQ(lines, 4);  // header, reference, two settings
}

TEST_F(Cli, CheckpointForOtherSensorCountExitsFour) {
  const fs::path out = dir_ / "mismatch";
  ASSERT_EQ(run("train --epochs 1 --hidden 4 -q --out-dir " + out.string() + data()), 0);
  ASSERT_EQ(run("synth --nodes 5 --days 2 --out-dir " + (dir_ / "five").string()), 0);
  EXPECT_EQ(run("evaluate -q --ckpt " + (out / "model.json").string() + " --out-dir " + out.string() + " --data " +
                (dir_ / "five").string()),
            4);
}

TEST_F(Cli, NegativeNoiseIsRejected) {
  const fs::path out = dir_ / "neg";
  ASSERT_EQ(run("train --epochs 1 --hidden 4 -q --out-dir " + out.string() + data()), 0);
  EXPECT_EQ(run("robustness --kind gaussian --params -1 --ckpt " + (out / "model.json").string() + " --out-dir " +
                out.string() + data()),
            2);
}
