#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "skillworld/analysis/export.hpp"
#include "skillworld/cli/commands.hpp"
#include "skillworld/pinball/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skillworld;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("skillworld_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun cli(const std::string& args, const std::string& env = "") const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + SKILLWORLD_CLI_PATH + "' " + args + " > '" +
                            out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  json manifest(const std::string& run) const { return json::parse(slurp(dir_ / run / "manifest.json")); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, VerifyCertificatesMatchConstructionLabels) {
  const auto r = cli("verify --seed 7 --instances 50 --out v");
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir_ / "v" / "certificates.jsonl");
  std::string line;
  std::size_t i = 0, preserving = 0;
  while (std::getline(in, line)) {
    const auto c = json::parse(line);
    const auto seed = cli::verify_instance_seed(7, i);
    EXPECT_EQ(c.at("instance_seed").get<std::uint64_t>(), seed);
    const bool label = cli::verify_instance(seed, i).preserving;
    EXPECT_EQ(c.at("preserving").get<bool>(), label) << "instance " << i;
    if (label) {
      ++preserving;
      EXPECT_LE(c.at("max_Bt_gap").get<double>(), 1e-10);
      EXPECT_LE(c.at("value_residual").get<double>(), 1e-8);
    } else {
      EXPECT_GT(c.at("max_Bt_gap").get<double>(), 1e-6);
    }
    const auto& vl = c.at("value_loss");
    EXPECT_LE(vl.at("gap").get<double>(), vl.at("bound").get<double>());
    for (const char* k : {"eps_T", "eps_R"}) EXPECT_GE(vl.at(k).get<double>(), 0.0);
    ++i;
  }
  EXPECT_EQ(i, 50u);
  EXPECT_EQ(preserving, 25u);
  const auto m = manifest("v");
  EXPECT_EQ(m.at("status"), "ok");
  EXPECT_EQ(m.at("outputs"), json::array({"certificates.jsonl"}));
  EXPECT_EQ(m.at("config").at("verify").at("instances"), 50);
}

TEST_F(Cli, UnknownFlagPrintsUsage) {
  const auto r = cli("verify --bogus 3");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(Cli, MissingSubcommandIsAnError) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
}

TEST_F(Cli, HelpExitsZero) {
  const auto r = cli("plan --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--imagination-steps"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyNamed) {
  std::ofstream(dir_ / "c.toml") << "[verify]\ninstancez = 3\n";
  const auto r = cli("verify --config c.toml");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("verify.instancez"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownSectionAndBadTypeNamed) {
  std::ofstream(dir_ / "a.toml") << "[plann]\nseed = 3\n";
  auto r = cli("plan --config a.toml");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("plann"), std::string::npos);
  std::ofstream(dir_ / "b.toml") << "[plan]\nreal_steps = \"many\"\n";
  r = cli("plan --config b.toml");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("plan.real_steps"), std::string::npos);
  std::ofstream(dir_ / "c.toml") << "[plan]\ngoal = [0.5]\n";
  EXPECT_EQ(cli("plan --config c.toml").code, 1);
  std::ofstream(dir_ / "d.toml") << "[plan\n";
  EXPECT_EQ(cli("plan --config d.toml").code, 1);
}

TEST_F(Cli, MalformedFlagValues) {
  EXPECT_EQ(cli("plan --goal 0.5").code, 1);
  EXPECT_EQ(cli("plan --goal a,b").code, 1);
  EXPECT_EQ(cli("verify --instances -3").code, 1);
  EXPECT_EQ(cli("verify --obs-mode sonar").code, 1);
}

TEST_F(Cli, FlagsOverrideFileAndManifestHoldsMergedConfig) {
  std::ofstream(dir_ / "c.toml") << "[global]\nseed = 11\n[verify]\ninstances = 4\nhorizon = 2\n";
  const auto r = cli("verify --config c.toml --instances 2 --out run");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = manifest("run");
  EXPECT_EQ(m.at("seed"), 11);
  EXPECT_EQ(m.at("config").at("verify").at("instances"), 2);
  EXPECT_EQ(m.at("config").at("verify").at("horizon"), 2);
  EXPECT_EQ(m.at("config_hash"), analysis::config_hash(m.at("config")));
  EXPECT_EQ(m.at("versions").at("skillworld"), analysis::kVersion);
}

TEST_F(Cli, ManifestWrittenWhenRunFails) {
  // (0, 0) lies inside the boundary wall.
  const auto r = cli("plan --goal 0,0 --out p");
  EXPECT_EQ(r.code, 1);
  const auto m = manifest("p");
  EXPECT_EQ(m.at("status"), "failed");
  EXPECT_NE(m.at("error").get<std::string>().find("goal"), std::string::npos);
}

TEST_F(Cli, RuntimeFaultExitsTwo) {
  const auto r = cli("eval-mi --model does/not/exist --out e");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(manifest("e").at("status"), "failed");
}

TEST_F(Cli, OutputRootFromEnvironment) {
  const auto r = cli("verify --instances 1 --out rel", "SKILLWORLD_OUT='" + (dir_ / "root").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "root" / "rel" / "certificates.jsonl"));
  EXPECT_FALSE(fs::exists(dir_ / "rel"));
  // Absolute paths are left alone.
  const auto abs = (dir_ / "abs").string();
  ASSERT_EQ(cli("verify --instances 1 --out '" + abs + "'", "SKILLWORLD_OUT=/nonexistent").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "abs" / "manifest.json"));
}

TEST_F(Cli, CollectWritesReadableDataset) {
  const auto r = cli("collect --seed 2 --samples 120 --csv true --out c");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto data = pinball::read_dataset((dir_ / "c" / "dataset.bin").string());
  EXPECT_EQ(data.size(), 120u);
  const auto again = pinball::collect_dataset(cli::pinball_env(), {.n_samples = 120}, 2);
  EXPECT_EQ(data.samples, again.samples);
  EXPECT_TRUE(fs::exists(dir_ / "c" / "dataset.csv"));
}

TEST_F(Cli, TrainThenAnalyse) {
  ASSERT_EQ(cli("train-model --seed 3 --samples 400 --steps 30 --out t").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "t" / "training_log.csv"));
  const auto m = model::load_model((dir_ / "t" / "model").string());
  EXPECT_EQ(m.d_z(), 4u);

  ASSERT_EQ(cli("eval-mi --model t/model --samples 200 --out mi").code, 0);
  const auto mi = analysis::read_mi_matrix((dir_ / "mi" / "mi_matrix.csv").string());
  EXPECT_EQ(mi.row_labels, (std::vector<std::string>{"x", "y", "vx", "vy"}));
  EXPECT_EQ(mi.col_labels.size(), 4u);

  ASSERT_EQ(cli("mds --model t/model --points 60 --out mds").code, 0);
  const auto rows = analysis::read_mds((dir_ / "mds" / "mds.csv").string());
  EXPECT_EQ(rows.size(), 60u);
  for (const auto& row : rows) {
    EXPECT_GE(row.ground_x, 0.0);
    EXPECT_LE(row.ground_x, 1.0);
  }
}

TEST_F(Cli, PixelModelRejectedInStateMode) {
  ASSERT_EQ(cli("train-model --seed 3 --samples 40 --steps 2 --obs-mode pixel --out t").code, 0);
  const auto r = cli("mds --model t/model --points 10 --out m");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("observation mode"), std::string::npos);
}

TEST_F(Cli, PlanRerunIsByteIdentical) {
  const std::string args =
      "plan --goal 0.9,0.2 --seed 3 --pretrain-samples 400 --pretrain-steps 20 --real-steps 150 "
      "--refresh-every 50 --imagination-steps 300";
  ASSERT_EQ(cli(args + " --out a").code, 0);
  ASSERT_EQ(cli(args + " --out b").code, 0);
  const auto a = slurp(dir_ / "a" / "curves.csv");
  EXPECT_EQ(a.rfind("ground_env_steps,success_rate,mean_return,epsilon,wallclock_s\n", 0), 0u);
  EXPECT_EQ(a, slurp(dir_ / "b" / "curves.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "model.bin"), slurp(dir_ / "b" / "model.bin"));
  // A different seed changes the run.
  ASSERT_EQ(cli("plan --goal 0.9,0.2 --seed 4 --pretrain-samples 400 --pretrain-steps 20 --real-steps 150 "
                "--refresh-every 50 --imagination-steps 300 --out c")
                .code,
            0);
  EXPECT_NE(slurp(dir_ / "a" / "model.bin"), slurp(dir_ / "c" / "model.bin"));
}

TEST_F(Cli, PlanFromSavedModel) {
  ASSERT_EQ(cli("train-model --seed 5 --samples 300 --steps 10 --out t").code, 0);
  const auto r = cli("plan --model t/model --pretrain-samples 300 --real-steps 60 --refresh-every 30 "
                     "--imagination-steps 100 --record-wallclock --out p");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = csv::read((dir_ / "p" / "curves.csv").string());
  ASSERT_GE(t.rows.size(), 2u);
  EXPECT_GT(csv::parse_double(t.rows.back()[t.column("wallclock_s")]), 0.0);
  EXPECT_EQ(csv::parse_double(t.rows.front()[t.column("ground_env_steps")]), 300.0);  // pretraining offset
  const auto m = manifest("p");
  EXPECT_EQ(m.at("config").at("plan").at("record_wallclock"), true);
  EXPECT_FALSE(fs::exists(dir_ / "p" / "model.bin"));
}
