#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dsos/audit.hpp"
#include "dsos/synthgen.hpp"
#include "support.hpp"

using namespace dsos;
using dsos::testutil::CommandResult;
using dsos::testutil::slurp;
using dsos::testutil::spit;
using dsos::testutil::TempDir;

namespace {

CommandResult cli(const std::string& args) { return testutil::run_command(std::string(DSOS_CLI_PATH) + " " + args); }

const char* kSmallGen = R"({
  "format_version": "1",
  "gen": {"num_classes": 4, "feature_dim": 6, "train_size": 1000, "test_size": 200,
          "rho": 0.2, "psi": 0.2, "num_ood_centers": 2, "seed": 3},
  "train": {"epochs": 5, "lr_drop_epochs": [2, 4], "hidden_dims": [12]}
})";

}  // namespace

TEST(Cli, HelpListsEveryFlag) {
  const CommandResult top = cli("--help");
  EXPECT_EQ(top.exit_code, 0);
  for (const char* sub : {"gen", "train", "audit", "report"}) EXPECT_NE(top.output.find(sub), std::string::npos);
  const CommandResult train = cli("train --help");
  EXPECT_EQ(train.exit_code, 0);
  for (const char* flag : {"--config", "--out", "--seed", "--disable-correction", "--disable-softening",
                           "--disable-bootstrap", "--warmup-mixup"}) {
    EXPECT_NE(train.output.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").exit_code, 2);
  EXPECT_EQ(cli("frobnicate").exit_code, 2);
  EXPECT_EQ(cli("train --config x.json --no-such-flag").exit_code, 2);
  EXPECT_EQ(cli("gen").exit_code, 2);
}

TEST(Cli, MissingConfigNamesThePath) {
  TempDir dir("cli_missing");
  const CommandResult r = cli("train --config " + dir.file("absent.json"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("absent.json"), std::string::npos) << r.output;
}

TEST(Cli, InvalidConfigExitsTwo) {
  TempDir dir("cli_badcfg");
  spit(dir.file("cfg.json"), R"({"format_version": "1", "gen": {"bogus": 1}})");
  const CommandResult r = cli("gen --config " + dir.file("cfg.json"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("bogus"), std::string::npos);
}

TEST(Cli, GenWritesExactCountsAndIsIdempotent) {
  TempDir dir("cli_gen");
  spit(dir.file("cfg.json"), kSmallGen);
  const CommandResult r1 = cli("gen --config " + dir.file("cfg.json") + " --out " + dir.file("a"));
  ASSERT_EQ(r1.exit_code, 0) << r1.output;
  const CommandResult r2 = cli("gen --config " + dir.file("cfg.json") + " --out " + dir.file("b"));
  ASSERT_EQ(r2.exit_code, 0) << r2.output;
  for (const char* f : {"train.csv", "test.csv", "manifest.json"}) {
    EXPECT_EQ(slurp(dir.file(std::string("a/") + f)), slurp(dir.file(std::string("b/") + f))) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir.file("a/manifest.json")));
  EXPECT_EQ(m["counts"]["ood"], 200);
  EXPECT_EQ(m["counts"]["id"], 200);
  EXPECT_EQ(m["counts"]["clean"], 600);
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(read_csv(dir.file("a/train.csv"), 4).size(), 1000u);

  spit(dir.file("clean.json"), R"({"format_version": "1", "gen": {"rho": 0, "psi": 0, "train_size": 100}})");
  ASSERT_EQ(cli("gen --config " + dir.file("clean.json") + " --out " + dir.file("c")).exit_code, 0);
  const auto mc = nlohmann::json::parse(slurp(dir.file("c/manifest.json")));
  EXPECT_EQ(mc["counts"]["ood"], 0);
  EXPECT_EQ(mc["counts"]["id"], 0);

  ASSERT_EQ(cli("gen --config " + dir.file("cfg.json") + " --out " + dir.file("d") + " --seed 4").exit_code, 0);
  EXPECT_NE(slurp(dir.file("a/train.csv")), slurp(dir.file("d/train.csv")));
}

TEST(Cli, TrainIsByteReproducibleAndReportRerenders) {
  TempDir dir("cli_train");
  spit(dir.file("cfg.json"), kSmallGen);
  const CommandResult r1 = cli("train --config " + dir.file("cfg.json") + " --out " + dir.file("r1"));
  ASSERT_EQ(r1.exit_code, 0) << r1.output;
  const CommandResult r2 = cli("train --config " + dir.file("cfg.json") + " --out " + dir.file("r2"));
  ASSERT_EQ(r2.exit_code, 0) << r2.output;
  EXPECT_EQ(slurp(dir.file("r1/report.json")), slurp(dir.file("r2/report.json")));
  EXPECT_EQ(slurp(dir.file("r1/curves.csv")), slurp(dir.file("r2/curves.csv")));

  const auto rep = nlohmann::json::parse(slurp(dir.file("r1/report.json")));
  EXPECT_TRUE(rep["retrieval"]["auc_ood"].is_number());
  EXPECT_TRUE(rep["best_accuracy"].is_number());
  EXPECT_GE(rep["best_accuracy"].get<double>(), rep["last_accuracy"].get<double>());
  EXPECT_EQ(rep["per_epoch"].back()["phase"], "correction");

  const CommandResult rr = cli("report --report " + dir.file("r1/report.json") + " --out " + dir.file("rr"));
  ASSERT_EQ(rr.exit_code, 0) << rr.output;
  EXPECT_EQ(slurp(dir.file("rr/curves.csv")), slurp(dir.file("r1/curves.csv")));
}

TEST(Cli, AblationFlags) {
  TempDir dir("cli_ablation");
  spit(dir.file("cfg.json"), kSmallGen);
  const CommandResult r = cli("train --config " + dir.file("cfg.json") + " --out " + dir.file("ce") +
                              " --disable-correction --warmup-mixup false");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto rep = nlohmann::json::parse(slurp(dir.file("ce/report.json")));
  for (const auto& e : rep["per_epoch"]) EXPECT_EQ(e["phase"], "warmup");
  EXPECT_EQ(rep["config"]["train"]["enable_correction"], false);
  EXPECT_EQ(rep["config"]["train"]["warmup_mixup"], false);

  const CommandResult s = cli("train --config " + dir.file("cfg.json") + " --out " + dir.file("ns") +
                              " --disable-softening --disable-bootstrap");
  ASSERT_EQ(s.exit_code, 0) << s.output;
  const auto ns = nlohmann::json::parse(slurp(dir.file("ns/report.json")));
  EXPECT_EQ(ns["config"]["train"]["enable_softening"], false);
  EXPECT_EQ(ns["config"]["train"]["enable_bootstrap"], false);
  EXPECT_EQ(cli("train --config " + dir.file("cfg.json") + " --warmup-mixup maybe").exit_code, 2);
}

TEST(Cli, TrainFromDatasetFilesRelativeToConfig) {
  TempDir dir("cli_data");
  spit(dir.file("gen.json"), kSmallGen);
  ASSERT_EQ(cli("gen --config " + dir.file("gen.json") + " --out " + dir.file("data")).exit_code, 0);
  spit(dir.file("data/cfg.json"), R"({"format_version": "1",
    "data": {"train": "train.csv", "test": "test.csv", "num_classes": 4},
    "train": {"epochs": 4, "lr_drop_epochs": [1, 3], "hidden_dims": [8]}})");
  const CommandResult r = cli("train --config " + dir.file("data/cfg.json") + " --out " + dir.file("out"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir.file("out/report.json")))["retrieval"].is_object());

  // a malformed row in the training file: exit 2 with its line number
  std::string text = slurp(dir.file("data/train.csv"));
  const std::size_t third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
  text.insert(third, ",extra");
  spit(dir.file("data/train.csv"), text);
  const CommandResult bad = cli("train --config " + dir.file("data/cfg.json") + " --out " + dir.file("out2"));
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_NE(bad.output.find("line 3"), std::string::npos) << bad.output;
}

TEST(Cli, AuditIdempotentAndRejectsDuplicates) {
  TempDir dir("cli_audit");
  Dataset d;
  d.num_classes = 3;
  PredictionTable t;
  t.probs = Matrix(60, 3);
  for (std::size_t i = 0; i < 60; ++i) {
    d.records.push_back({i, {}, i % 3, Truth::clean()});
    t.ids.push_back(i);
    const double top = 0.5 + 0.008 * static_cast<double>(i);
    for (std::size_t c = 0; c < 3; ++c) t.probs(i, c) = c == i % 3 ? top : (1.0 - top) / 2.0;
  }
  write_csv(d, dir.file("labels.csv"));
  write_predictions_csv(dir.file("preds.csv"), t);
  const std::string args = "audit --labels " + dir.file("labels.csv") + " --predictions " + dir.file("preds.csv");
  const CommandResult a = cli(args + " --out " + dir.file("a"));
  ASSERT_EQ(a.exit_code, 0) << a.output;
  ASSERT_EQ(cli(args + " --out " + dir.file("b")).exit_code, 0);
  EXPECT_EQ(slurp(dir.file("a/audit.json")), slurp(dir.file("b/audit.json")));
  const auto j = nlohmann::json::parse(slurp(dir.file("a/audit.json")));
  EXPECT_EQ(j["assessments"]["samples"].size(), 60u);

  std::string text = slurp(dir.file("preds.csv"));
  text += text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n'));
  spit(dir.file("dup.csv"), text);
  const CommandResult dup =
      cli("audit --labels " + dir.file("labels.csv") + " --predictions " + dir.file("dup.csv") + " --out " +
          dir.file("c"));
  EXPECT_EQ(dup.exit_code, 2);
  EXPECT_NE(dup.output.find("line 62"), std::string::npos) << dup.output;
  EXPECT_NE(dup.output.find("duplicate"), std::string::npos);
}
