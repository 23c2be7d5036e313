// Copyright 2026 The Tabaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tabaudit/cli.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"
#include "tabaudit/fixture.hpp"

#ifndef TABAUDIT_CLI_PATH
#error "TABAUDIT_CLI_PATH must point at the tabaudit binary"
#endif

namespace tabaudit {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun Exec(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(TABAUDIT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream s;
  s << in.rdbuf();
  r.output = s.str();
  return r;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tabaudit_cli_" + std::string(::testing::UnitTest::GetInstance()
                                              ->current_test_info()
                                              ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const Dataset ds = MakeFixture(rows_, 3);
    WriteCsvFile((dir_ / "data.csv").string(), ds);
    WriteJsonFile((dir_ / "schema.json").string(), ds.schema.ToJson());
  }
  void TearDown() override { fs::remove_all(dir_); }

  nlohmann::json Predictive() const {
    return {{"dataset", "data.csv"},
            {"schema", "schema.json"},
            {"trainer",
             {{"kind", "dpsgd"},
              {"label_column", "income"},
              {"model", {{"kind", "logistic_regression"}}},
              {"dpsgd",
               {{"noise_multiplier", 1.0},
                {"sample_rate", 0.05},
                {"steps", 20},
                {"learning_rate", 1.0}}}}},
            {"attacks", {"loss_threshold", "lira"}},
            {"shadow_runs", 24},
            {"master_seed", 5},
            {"out", "out"}};
  }

  fs::path Write(const std::string& name, const nlohmann::json& j) const {
    WriteJsonFile((dir_ / name).string(), j);
    return dir_ / name;
  }

  CliRun Cli(const std::string& args) const { return Exec(args, dir_ / "log.txt"); }

  fs::path dir_;
  std::size_t rows_ = 120;
};

TEST_F(CliTest, UsageErrorsExitThree) {
  EXPECT_EQ(Cli("").code, 3);
  EXPECT_EQ(Cli("bogus").code, 3);
  EXPECT_EQ(Cli("train").code, 3);  // --config required
  EXPECT_EQ(Cli("train --config x.json --workers 0").code, 3);
}

TEST_F(CliTest, MalformedConfigExitsAboveTwoWithFieldPath) {
  {
    std::ofstream(dir_ / "broken.json") << "{ not json";
    const CliRun r = Cli("train --config " + (dir_ / "broken.json").string());
    EXPECT_GT(r.code, 2);
    EXPECT_NE(r.output.find("error"), std::string::npos);
  }
  auto bad = Predictive();
  bad["trainer"]["dpsgd"]["noise_multiplier"] = -1.0;
  CliRun r = Cli("train --config " + Write("neg.json", bad).string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("trainer.dpsgd"), std::string::npos) << r.output;

  bad = Predictive();
  bad["delta"] = 1.5;
  r = Cli("attack --config " + Write("delta.json", bad).string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("delta"), std::string::npos) << r.output;

  bad = Predictive();
  bad["dataset"] = "nowhere.csv";
  r = Cli("train --config " + Write("missing.json", bad).string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("dataset"), std::string::npos) << r.output;

  bad = Predictive();
  bad["attacks"] = {"lira", "telepathy"};
  r = Cli("attack --config " + Write("unknown.json", bad).string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("attacks[1]"), std::string::npos) << r.output;
}

TEST_F(CliTest, IncompatibleAttackRejectedBeforeTraining) {
  auto c = Predictive();
  c["attacks"] = {"dcr"};
  const CliRun r = Cli("attack --config " + Write("c.json", c).string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("generative"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(CliTest, DryRunPrintsCostWithoutTraining) {
  rows_ = 1000;
  SetUp();
  auto c = Predictive();
  c["shadow_runs"] = 100;
  const CliRun r = Cli("attack --dry-run --config " + Write("c.json", c).string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("100100000"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(CliTest, TrainWritesArtifactAndIsByteIdentical) {
  const auto cfg = Write("c.json", Predictive()).string();
  ASSERT_EQ(Cli("train --config " + cfg).code, 0);
  const std::string a = Slurp(dir_ / "out" / "model.bin");
  const auto acc = ReadJsonFile((dir_ / "out" / "accountant.json").string());
  EXPECT_EQ(acc["schema_version"], 1);
  EXPECT_TRUE(acc["claimed"].contains("epsilon"));
  ASSERT_EQ(Cli("train --config " + cfg + " --workers 3").code, 0);
  EXPECT_EQ(Slurp(dir_ / "out" / "model.bin"), a);
  EXPECT_FALSE(a.empty());
  EXPECT_TRUE(fs::exists(dir_ / "out" / "provenance.json"));

  auto bug = Predictive();
  bug["trainer"]["dpsgd"]["bug_mode"] = "static_noise";
  bug["out"] = "bug";
  ASSERT_EQ(Cli("train --config " + Write("b.json", bug).string()).code, 0);
  const auto bacc = ReadJsonFile((dir_ / "bug" / "accountant.json").string());
  EXPECT_EQ(bacc["claimed"]["status"], "no_valid_guarantee");
}

TEST_F(CliTest, SynthesizeWritesSamples) {
  nlohmann::json c = Predictive();
  c["trainer"] = {{"kind", "marginal"}, {"marginal", {{"noise_std", 0.5}}}};
  c["n_samples"] = 40;
  const auto cfg = Write("c.json", c).string();
  EXPECT_EQ(Cli("train --config " + cfg).code, 4);  // wrong command for the kind
  ASSERT_EQ(Cli("synthesize --config " + cfg).code, 0);
  const Dataset s = LoadCsv((dir_ / "out" / "synthetic.csv").string(), FixtureSchema());
  EXPECT_EQ(s.size(), 40u);
}

TEST_F(CliTest, AttackReportsAreDeterministicAcrossWorkers) {
  const auto cfg = Write("c.json", Predictive()).string();
  ASSERT_EQ(Cli("attack --workers 1 --out " + (dir_ / "w1").string() + " --config " + cfg).code, 0);
  ASSERT_EQ(Cli("attack --workers 8 --out " + (dir_ / "w8").string() + " --config " + cfg).code, 0);
  ASSERT_EQ(Cli("attack --workers 1 --out " + (dir_ / "again").string() + " --config " + cfg).code, 0);
  for (const char* f : {"loss_threshold.json", "loss_threshold_roc.csv", "lira.json",
                        "lira_roc.csv", "attack_index.json"}) {
    const std::string a = Slurp(dir_ / "w1" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, Slurp(dir_ / "w8" / f)) << f;
    EXPECT_EQ(a, Slurp(dir_ / "again" / f)) << f;
  }
  const auto j = ReadJsonFile((dir_ / "w1" / "lira.json").string());
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["positives"].get<int>() + j["negatives"].get<int>(), 12);
  EXPECT_EQ(Slurp(dir_ / "w1" / "lira_roc.csv").rfind("threshold,fpr,tpr\n", 0), 0u);
}

TEST_F(CliTest, AuditExitCodesAndDeterminism) {
  nlohmann::json step = {
      {"trainer",
       {{"kind", "dpsgd"},
        {"label_column", "income"},
        {"dpsgd", {{"noise_multiplier", 1.0}, {"sample_rate", 0.1}, {"bug_mode", "none"}}}}},
      {"audit", {{"kind", "step"}, {"trials", 2000}, {"delta", 0.1}}},
      {"master_seed", 3},
      {"out", "ok"}};
  const auto ok = Write("ok.json", step).string();
  EXPECT_EQ(Cli("audit --config " + ok).code, 0);
  const std::string a = Slurp(dir_ / "ok" / "audit.json");
  EXPECT_EQ(Cli("audit --workers 8 --config " + ok).code, 0);
  EXPECT_EQ(Slurp(dir_ / "ok" / "audit.json"), a);

  step["trainer"]["dpsgd"]["bug_mode"] = "no_noise";
  step["out"] = "bad";
  EXPECT_EQ(Cli("audit --config " + Write("bad.json", step).string()).code, 1);
  const auto v = ReadJsonFile((dir_ / "bad" / "audit.json").string());
  EXPECT_EQ(v["pass"], false);
  EXPECT_EQ(v["exit_code"], 1);

  step["audit"]["trials"] = 10;
  EXPECT_EQ(Cli("audit --config " + Write("few.json", step).string()).code, 4);
}

TEST_F(CliTest, EndToEndAuditRuns) {
  auto c = Predictive();
  c["audit"] = {{"kind", "end_to_end"}};
  c["shadow_runs"] = 20;
  const auto cfg = Write("c.json", c).string();
  const CliRun r = Cli("audit --config " + cfg);
  const auto v = ReadJsonFile((dir_ / "out" / "audit.json").string());
  EXPECT_EQ(r.code, v["exit_code"].get<int>()) << r.output;
  EXPECT_TRUE(r.code == 0 || r.code == 2) << r.output;  // 20 runs leave little power
  EXPECT_EQ(v["audit"], "end_to_end");
  EXPECT_EQ(v["canary"]["kind"], "record_canary");
  EXPECT_EQ(v["canary"]["record"]["sector"], "other");
}

TEST_F(CliTest, Report) {
  fs::create_directories(dir_ / "empty");
  CliRun r = Cli("report " + (dir_ / "empty").string());
  EXPECT_EQ(r.code, 0);
  auto s = ReadJsonFile((dir_ / "empty" / "summary.json").string());
  EXPECT_TRUE(s["attacks"].empty());
  EXPECT_TRUE(s["audits"].empty());
  EXPECT_EQ(s["schema_version"], 1);

  auto c = Predictive();
  c["attacks"] = {"loss_threshold"};
  c["out"] = "one";
  ASSERT_EQ(Cli("attack --config " + Write("one.json", c).string()).code, 0);
  ASSERT_EQ(Cli("report " + (dir_ / "one").string()).code, 0);
  s = ReadJsonFile((dir_ / "one" / "summary.json").string());
  ASSERT_EQ(s["attacks"].size(), 1u);
  EXPECT_EQ(s["attacks"][0]["attack"], "loss_threshold");
  EXPECT_TRUE(s["attacks"][0]["target"].get<std::string>().rfind("row:", 0) == 0);
  const std::string table = Slurp(dir_ / "one" / "summary.txt");
  EXPECT_NE(table.find("eps_cp_bound"), std::string::npos);
  EXPECT_NE(table.find("claimed_eps"), std::string::npos);

  nlohmann::json step = {{"trainer", {{"kind", "dpsgd"}, {"label_column", "income"}}},
                         {"audit", {{"kind", "step"}, {"trials", 200}, {"delta", 0.1}}},
                         {"out", "one"}};
  ASSERT_EQ(Cli("audit --config " + Write("step.json", step).string()).code, 0);
  ASSERT_EQ(Cli("report " + (dir_ / "one").string()).code, 0);
  s = ReadJsonFile((dir_ / "one" / "summary.json").string());
  EXPECT_EQ(s["attacks"].size(), 1u);
  EXPECT_EQ(s["audits"].size(), 1u);

  fs::remove(dir_ / "one" / "loss_threshold_roc.csv");
  r = Cli("report " + (dir_ / "one").string());
  EXPECT_GT(r.code, 2);
  s = ReadJsonFile((dir_ / "one" / "summary.json").string());
  ASSERT_EQ(s["missing"].size(), 1u);
  EXPECT_EQ(s["missing"][0]["file"], "loss_threshold_roc.csv");
  EXPECT_EQ(s["attacks"].size(), 1u);

  EXPECT_EQ(Cli("report " + (dir_ / "absent").string()).code, 4);
}

TEST(CliConfig, ValidationNamesFields) {
  const Dataset ds = MakeFixture(10, 1);
  auto expect_path = [](const nlohmann::json& j, const std::string& path) {
    try {
      cli::ParseConfig(j, ".");
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(path), std::string::npos) << e.what();
    }
  };
  expect_path({{"shadow_runs", 1}}, "shadow_runs");
  expect_path({{"confidence", 1.0}}, "confidence");
  expect_path({{"trainer", {{"kind", "dpsgd"}, {"dpsgd", {{"sample_rate", 0.0}}}}}},
              "trainer.dpsgd");
  expect_path({{"trainer", {{"kind", "nope"}}}}, "trainer");
  expect_path({{"audit", {{"kind", "sideways"}}}}, "audit.kind");
  expect_path({{"target", {{"strategy", "record"}}}}, "target.record");
  expect_path({{"threat_model", {{"model_access", "telepathic"}}}}, "threat_model");
  expect_path({{"holdout_fraction", 0.0}}, "holdout_fraction");
}

}  // namespace
}  // namespace tabaudit
