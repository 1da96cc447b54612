#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dsos/config.hpp"
#include "support.hpp"

using namespace dsos;
using nlohmann::json;

namespace {

json minimal_gen() { return json::parse(R"({"format_version": "1", "gen": {"num_classes": 5}})"); }

}  // namespace

TEST(Config, MinimalGenUsesDefaults) {
  const ExperimentConfig cfg = parse_experiment_config(minimal_gen());
  ASSERT_TRUE(cfg.gen.has_value());
  EXPECT_FALSE(cfg.data.has_value());
  EXPECT_EQ(cfg.gen->num_classes, 5u);
  EXPECT_EQ(cfg.gen->rho, 0.2438);
  EXPECT_EQ(cfg.train.correction.alpha, 0.05);
  EXPECT_EQ(cfg.train.correction.gamma, 0.4);
  EXPECT_EQ(cfg.train.lr_drop_factor, 10.0);
  EXPECT_EQ(cfg.output_dir, "out");
}

TEST(Config, FullRoundTripThroughJson) {
  ExperimentConfig cfg;
  cfg.gen = GenConfig{};
  cfg.gen->rho = 0.2;
  cfg.gen->seed = 77;
  cfg.train.epochs = 12;
  cfg.train.warmup_end = 4;
  cfg.train.lr_drop_epochs = {3, 9};
  cfg.train.hidden_dims = {32, 16};
  cfg.train.correction.alpha = 0.1;
  cfg.train.correction_mixup = true;
  cfg.train.enable_bootstrap = false;
  cfg.output_dir = "results";
  const json j = json::parse(to_json(cfg).dump());
  const ExperimentConfig back = parse_experiment_config(j);
  EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
  EXPECT_EQ(back.train.hidden_dims, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(*back.train.warmup_end, 4u);
  EXPECT_FALSE(back.train.enable_bootstrap);
}

TEST(Config, DataPaths) {
  const ExperimentConfig cfg = parse_experiment_config(json::parse(
      R"({"format_version": "1", "data": {"train": "a.csv", "test": "b.csv", "num_classes": 4}})"));
  ASSERT_TRUE(cfg.data.has_value());
  EXPECT_EQ(cfg.data->train, "a.csv");
  EXPECT_EQ(cfg.data->num_classes, 4u);
  EXPECT_THROW(parse_experiment_config(json::parse(R"({"format_version": "1", "data": {"train": "a.csv"}})")),
               ConfigError);
}

TEST(Config, StrictParsing) {
  auto expect_error = [](const std::string& text) {
    EXPECT_THROW(parse_experiment_config(json::parse(text)), ConfigError) << text;
  };
  expect_error(R"({"gen": {}})");
  expect_error(R"({"format_version": "2", "gen": {}})");
  expect_error(R"({"format_version": "1"})");
  expect_error(R"({"format_version": "1", "gen": {}, "data": {"train": "a", "test": "b", "num_classes": 3}})");
  expect_error(R"({"format_version": "1", "gen": {}, "extra": 1})");
  expect_error(R"({"format_version": "1", "gen": {"num_clases": 3}})");
  expect_error(R"({"format_version": "1", "gen": {}, "train": {"epochz": 3}})");
  expect_error(R"({"format_version": "1", "gen": {}, "train": {"correction": {"alpha": 0}}})");
  expect_error(R"({"format_version": "1", "gen": {}, "train": {"correction": {"beta": 1}}})");
  expect_error(R"({"format_version": "1", "gen": {"num_classes": -3}})");
  expect_error(R"({"format_version": "1", "gen": {"num_classes": 2.5}})");
  expect_error(R"({"format_version": "1", "gen": {"rho": "high"}})");
  expect_error(R"({"format_version": "1", "gen": {"rho": 0.7, "psi": 0.4}})");
  expect_error(R"({"format_version": "1", "gen": {}, "train": {"epochs": 10, "warmup_end": 11}})");
  expect_error(R"({"format_version": "1", "gen": {}, "train": {"lr_drop_epochs": [1, -2]}})");
  expect_error(R"({"format_version": "1", "gen": {}, "train": {"warmup_mixup": "yes"}})");
  expect_error(R"([1, 2])");
}

TEST(Config, NullWarmupEndMeansDefault) {
  const ExperimentConfig cfg = parse_experiment_config(
      json::parse(R"({"format_version": "1", "gen": {}, "train": {"warmup_end": null}})"));
  EXPECT_FALSE(cfg.train.warmup_end.has_value());
  EXPECT_EQ(cfg.train.resolved_warmup_end(), 21u);
}

TEST(Config, LoadFromFile) {
  testutil::TempDir dir("config");
  testutil::spit(dir.file("cfg.json"), minimal_gen().dump());
  EXPECT_EQ(load_experiment_config(dir.file("cfg.json")).gen->num_classes, 5u);
  testutil::spit(dir.file("broken.json"), "{\"format_version\": ");
  EXPECT_THROW(load_experiment_config(dir.file("broken.json")), ConfigError);
  try {
    load_experiment_config(dir.file("nope.json"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.json"), std::string::npos);
  }
}
