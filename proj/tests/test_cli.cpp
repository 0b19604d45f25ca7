#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "jeffreys/experiment.hpp"

using namespace jeffreys;
namespace fs = std::filesystem;

namespace {

const std::string kSmall =
    " --data.n-speakers-train=8 --data.n-speakers-eval=6 --data.per-speaker=6 --trials.n-target=40"
    " --trials.n-nontarget=120 --train.epochs=2 --network.hidden-dims=[8] --network.embed-dim=4 --seeds=[3]";

int run(const std::string& args) {
  const std::string cmd = std::string(JEFFREYS_LAB_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("generate --train.loss-kind=focal"), 2);
  EXPECT_EQ(run("generate --no-such.key=1"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("-c /nonexistent.json generate"), 2);
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path d = fresh_dir("jeffreys_cli_div");
  EXPECT_EQ(run("train -o " + d.string() + kSmall + " --train.learning-rate=1e200 --train.epochs=3"), 3);
  fs::remove_all(d);
}

TEST(Cli, SelfTest) {
  EXPECT_EQ(run("self-test"), 0);
  EXPECT_EQ(run("self-test --mutate-entropy-sign"), 4);
}

TEST(Cli, PipelineSubcommands) {
  const fs::path d = fresh_dir("jeffreys_cli_pipe");
  const std::string o = " -o " + d.string() + kSmall;
  ASSERT_EQ(run("generate" + o), 0);
  EXPECT_TRUE(fs::exists(d / "train.csv"));
  EXPECT_TRUE(fs::exists(d / "eval_strong.csv"));
  EXPECT_TRUE(fs::exists(d / "trials_strong.csv"));
  ASSERT_EQ(run("train --data " + (d / "train.csv").string() + o), 0);
  EXPECT_TRUE(fs::exists(d / "params.txt"));
  EXPECT_TRUE(fs::exists(d / "loss.csv"));
  ASSERT_EQ(run("evaluate --params " + (d / "params.txt").string() + " --train " + (d / "train.csv").string() +
                " --eval " + (d / "eval_strong.csv").string() + " --trials " + (d / "trials_strong.csv").string() + o),
            0);
  const json m = read_json(d / "metrics_strong.json");
  EXPECT_GE(m.at("eer").get<double>(), 0.0);
  EXPECT_LE(m.at("min_dcf").get<double>(), 1.0);
  ASSERT_EQ(run("probe --params " + (d / "params.txt").string() + " --data " + (d / "eval_mild.csv").string() + o), 0);
  EXPECT_GE(read_json(d / "probe_mild.json").at("mean_top_count").get<double>(), 1.0);
  EXPECT_EQ(run("evaluate --params " + (d / "missing.txt").string() + " --train x --eval y --trials z" + o), 1);
  fs::remove_all(d);
}

TEST(Cli, ExperimentAndDetFromEnvironmentDir) {
  const fs::path d = fresh_dir("jeffreys_cli_env");
  ::setenv(kOutputDirEnv, d.c_str(), 1);
  ASSERT_EQ(run("run-experiment" + kSmall + " --train.loss-kind=ce"), 0);
  EXPECT_TRUE(fs::exists(d / "report.json"));
  EXPECT_EQ(run("emit-det --seed 3"), 0);
  EXPECT_TRUE(fs::exists(d / "det" / "seed-3" / "ce_jeffreys__strong.csv"));
  EXPECT_NE(run("emit-det --seed 4"), 0);
  ::unsetenv(kOutputDirEnv);
  fs::remove_all(d);
}
