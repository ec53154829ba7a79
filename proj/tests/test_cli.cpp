#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "protoset/model.hpp"
#include "protoset/training.hpp"

namespace protoset::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "protoset");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "protoset_cli_tests" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::trunc) << text;
    return path(name);
  }
  fs::path dir_;
};

TEST_F(CliTest, HelpOnEverySubcommand) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"gen-data", {"--dataset", "--config", "--seed"}},
      {"train", {"--dataset", "--out", "--checkpoint", "--config", "--seed", "--desk"}},
      {"eval", {"--checkpoint", "--dataset", "--mode", "--out", "--config"}},
      {"partition", {"--distances", "--prototypes", "--restarts", "--seed"}},
      {"grad-check", {"--checkpoint", "--dataset", "--draws", "--coords", "--config", "--seed", "--desk"}},
      {"bench", {"--checkpoint", "--n", "--repeats", "--config", "--seed", "--desk"}},
  };
  for (const auto& [sub, names] : flags) {
    const auto r = invoke({sub, "--help"});
    EXPECT_EQ(r.code, kExitOk) << sub;
    for (const auto& flag : names) EXPECT_NE(r.out.find(flag), std::string::npos) << sub << " " << flag;
  }
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  const auto r = invoke({"partition", "--distances", write("d.csv", "0\n"), "--bogus"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_EQ(invoke({"eval", "--checkpoint", path("missing"), "--dataset", path("missing")}).code, kExitUsage);
  EXPECT_EQ(invoke({"eval", "--mode", "both"}).code, kExitUsage);
}

TEST_F(CliTest, ConfigAndDomainErrorsExitOne) {
  const auto ds = path("ds.pset");
  ASSERT_EQ(invoke({"gen-data", "--dataset", ds}).code, kExitOk);
  const auto r = invoke({"train", "--dataset", ds, "--out", path("run"), "--config", write("c.txt", "kk=1\n")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("kk"), std::string::npos);
  EXPECT_EQ(invoke({"train", "--dataset", ds, "--out", path("run"), "--config", write("m.txt", "momentum=2\n")}).code,
            kExitUsage);
  EXPECT_EQ(invoke({"partition", "--distances", write("bad.csv", "0,1\n1\n")}).code, kExitUsage);
}

TEST_F(CliTest, PartitionBlockMatrix) {
  const auto csv = write("block.csv", "0,0,4,4\n0,0,4,4\n4,4,0,0\n4,4,0,0\n");
  const auto r = invoke({"partition", "--distances", csv, "-k", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("labels: (\\d) (\\d) (\\d) (\\d)")));
  EXPECT_EQ(m[1], m[2]);
  EXPECT_EQ(m[3], m[4]);
  EXPECT_NE(m[1], m[3]);
  EXPECT_NE(r.out.find("\nvalue: 0\n"), std::string::npos);
  EXPECT_NE(r.out.find("oracle_gap: 0\n"), std::string::npos);
}

TEST_F(CliTest, PartitionSkipsOracleWhenTooLarge) {
  std::string csv;
  for (int i = 0; i < 13; ++i) {
    for (int j = 0; j < 13; ++j) csv += (j ? "," : "") + std::to_string(i == j ? 0 : (i + j) % 5);
    csv += "\n";
  }
  const auto r = invoke({"partition", "--distances", write("big.csv", csv), "-k", "3"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("oracle: skipped"), std::string::npos);
}

TEST_F(CliTest, GradCheckFreshModel) {
  const auto r = invoke({"grad-check", "--desk", "--seed", "5", "--draws", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.out;
  const std::regex line("max_rel=([0-9.e+-]+)");
  int tensors = 0;
  for (auto it = std::sregex_iterator(r.out.begin(), r.out.end(), line); it != std::sregex_iterator(); ++it) {
    EXPECT_LE(std::stod((*it)[1]), 1e-4);
    ++tensors;
  }
  EXPECT_EQ(tensors, 14);
  EXPECT_NE(r.out.find("grad-check: PASS"), std::string::npos);
}

TEST_F(CliTest, TrainZeroEpochsWritesInitialization) {
  const auto ds = path("ds.pset");
  ASSERT_EQ(invoke({"gen-data", "--dataset", ds, "--config", write("g.txt", "d_in=10\nsubjects=4\n")}).code, kExitOk);
  const auto r = invoke({"train", "--dataset", ds, "--out", path("run"), "--desk", "--seed", "3", "--config",
                         write("t.txt", "epochs=0\n")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  TrainConfig cfg;
  cfg.apply_desk_preset();
  cfg.d_in = 10;
  cfg.seed = 3;
  EXPECT_EQ(flatten(load_checkpoint(dir_ / "run" / "checkpoint.txt")), flatten(make_model(cfg)));
  EXPECT_EQ(slurp(dir_ / "run" / "loss.csv"), "iter,ranking,dsg,joint\n");
}

TEST_F(CliTest, PipelineIsReproducible) {
  const auto cfg = write("cfg.txt", "epochs=1\npairs_per_epoch=40\nsubjects=5\n");
  for (const char* run_name : {"a", "b"}) {
    const fs::path run = dir_ / run_name;
    const auto ds = (run / "ds.pset").string();
    fs::create_directories(run);
    ASSERT_EQ(invoke({"gen-data", "--dataset", ds, "--config", cfg, "--seed", "11"}).code, kExitOk);
    ASSERT_EQ(invoke({"train", "--dataset", ds, "--out", (run / "model").string(), "--config", cfg, "--desk",
                      "--seed", "11"})
                  .code,
              kExitOk);
    const auto r = invoke({"eval", "--checkpoint", (run / "model" / "checkpoint.txt").string(), "--dataset", ds,
                           "--out", (run / "eval").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("\"tar_at_far\""), std::string::npos);
  }
  for (const char* file : {"ds.pset", "model/checkpoint.txt", "model/loss.csv", "model/config.txt",
                           "eval/roc.csv", "eval/cmc.csv", "eval/metrics.json"}) {
    const auto a = slurp(dir_ / "a" / file);
    EXPECT_FALSE(a.empty()) << file;
    EXPECT_EQ(a, slurp(dir_ / "b" / file)) << file;
  }
}

TEST_F(CliTest, EvalModesAndThreads) {
  const auto ds = path("ds.pset");
  ASSERT_EQ(invoke({"gen-data", "--dataset", ds, "--config", write("g.txt", "subjects=5\n")}).code, kExitOk);
  ASSERT_EQ(invoke({"train", "--dataset", ds, "--out", path("m"), "--desk", "--config",
                    write("t.txt", "epochs=0\n")})
                .code,
            kExitOk);
  const auto ckpt = (dir_ / "m" / "checkpoint.txt").string();
  const auto media = invoke({"eval", "--checkpoint", ckpt, "--dataset", ds, "--mode", "media"});
  EXPECT_EQ(media.code, kExitOk);
  EXPECT_NE(media.out.find("\"mode\": \"media\""), std::string::npos);
  ::setenv("PROTO_SET_THREADS", "3", 1);
  const auto threaded = invoke({"eval", "--checkpoint", ckpt, "--dataset", ds, "--mode", "media"});
  ::unsetenv("PROTO_SET_THREADS");
  EXPECT_EQ(threaded.out, media.out);
}

TEST_F(CliTest, BenchReportsCounts) {
  const auto r = invoke({"bench", "--desk", "--n", "64", "--repeats", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("media-level: distance_evaluations=4096"), std::string::npos);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("prototype-level: distance_evaluations=(\\d+)")));
  EXPECT_LE(std::stoi(m[1]), 64);
}

}  // namespace
}  // namespace protoset::cli
