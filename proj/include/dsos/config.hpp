#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "dsos/core.hpp"
#include "dsos/synthgen.hpp"
#include "dsos/trainer.hpp"

namespace dsos {

inline constexpr const char* kFormatVersion = "1";

struct DataPaths {
  std::string train;
  std::string test;
  std::size_t num_classes = 0;
};

/// Exactly one of `gen` / `data` is set.
struct ExperimentConfig {
  std::string format_version = kFormatVersion;
  std::optional<GenConfig> gen;
  std::optional<DataPaths> data;
  TrainConfig train;
  std::string output_dir = "out";
};

namespace detail {

/// Strict object reader: every key must be consumed, unknown keys are errors.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    const auto& value = j_.at(key);
    if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!value.is_number_unsigned()) throw ConfigError(where_ + "." + key + ": expected a nonnegative integer");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!value.is_array()) throw ConfigError(where_ + "." + key + ": expected an array");
      for (const auto& e : value) {
        if (!e.is_number_unsigned()) throw ConfigError(where_ + "." + key + ": expected nonnegative integers");
      }
    }
    try {
      out = value.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  const nlohmann::json& child(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> used_;
};

}  // namespace detail

inline GenConfig parse_gen_config(const nlohmann::json& j) {
  GenConfig g;
  detail::StrictObject o(j, "gen");
  o.get("num_classes", g.num_classes);
  o.get("feature_dim", g.feature_dim);
  o.get("train_size", g.train_size);
  o.get("test_size", g.test_size);
  o.get("rho", g.rho);
  o.get("psi", g.psi);
  o.get("class_separation", g.class_separation);
  o.get("within_class_sigma", g.within_class_sigma);
  o.get("num_ood_centers", g.num_ood_centers);
  o.get("seed", g.seed);
  o.finish();
  validate(g);
  return g;
}

inline CorrectionParams parse_correction(const nlohmann::json& j) {
  CorrectionParams p;
  detail::StrictObject o(j, "train.correction");
  o.get("alpha", p.alpha);
  o.get("gamma", p.gamma);
  o.get("bootstrap_threshold", p.bootstrap_threshold);
  o.get("mixup_beta", p.mixup_beta);
  o.finish();
  validate(p);
  return p;
}

inline TrainConfig parse_train_config(const nlohmann::json& j) {
  TrainConfig t;
  detail::StrictObject o(j, "train");
  o.get("epochs", t.epochs);
  o.get("warmup_end", t.warmup_end);
  o.get("lr", t.lr);
  o.get("lr_drop_epochs", t.lr_drop_epochs);
  o.get("lr_drop_factor", t.lr_drop_factor);
  o.get("momentum", t.momentum);
  o.get("weight_decay", t.weight_decay);
  o.get("batch_size", t.batch_size);
  o.get("hidden_dims", t.hidden_dims);
  if (o.has("correction")) t.correction = parse_correction(o.child("correction"));
  o.get("warmup_mixup", t.warmup_mixup);
  o.get("correction_mixup", t.correction_mixup);
  o.get("enable_correction", t.enable_correction);
  o.get("enable_bootstrap", t.enable_bootstrap);
  o.get("enable_softening", t.enable_softening);
  o.get("bmm_iters", t.bmm_iters);
  o.get("seed", t.seed);
  o.finish();
  return t;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::StrictObject o(j, "config");
  if (!o.has("format_version")) throw ConfigError("config: missing format_version");
  o.get("format_version", cfg.format_version);
  if (cfg.format_version != kFormatVersion) {
    throw ConfigError("config: unsupported format_version '" + cfg.format_version + "'");
  }
  if (o.has("gen")) cfg.gen = parse_gen_config(o.child("gen"));
  if (o.has("data")) {
    DataPaths d;
    detail::StrictObject od(o.child("data"), "data");
    od.get("train", d.train);
    od.get("test", d.test);
    od.get("num_classes", d.num_classes);
    od.finish();
    if (d.train.empty() || d.test.empty() || d.num_classes == 0) {
      throw ConfigError("data: train, test and num_classes are required");
    }
    cfg.data = d;
  }
  if (cfg.gen.has_value() == cfg.data.has_value()) {
    throw ConfigError("config: exactly one of 'gen' or 'data' must be present");
  }
  if (o.has("train")) cfg.train = parse_train_config(o.child("train"));
  o.get("output_dir", cfg.output_dir);
  o.finish();
  validate(cfg.train);
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return parse_experiment_config(j);
}

inline nlohmann::ordered_json to_json(const GenConfig& g) {
  nlohmann::ordered_json j;
  j["num_classes"] = g.num_classes;
  j["feature_dim"] = g.feature_dim;
  j["train_size"] = g.train_size;
  j["test_size"] = g.test_size;
  j["rho"] = g.rho;
  j["psi"] = g.psi;
  j["class_separation"] = g.class_separation;
  j["within_class_sigma"] = g.within_class_sigma;
  j["num_ood_centers"] = g.num_ood_centers;
  j["seed"] = g.seed;
  return j;
}

inline nlohmann::ordered_json to_json(const TrainConfig& t) {
  nlohmann::ordered_json j;
  j["epochs"] = t.epochs;
  j["warmup_end"] = t.resolved_warmup_end();
  j["lr"] = t.lr;
  j["lr_drop_epochs"] = t.lr_drop_epochs;
  j["lr_drop_factor"] = t.lr_drop_factor;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["batch_size"] = t.batch_size;
  j["hidden_dims"] = t.hidden_dims;
  nlohmann::ordered_json c;
  c["alpha"] = t.correction.alpha;
  c["gamma"] = t.correction.gamma;
  c["bootstrap_threshold"] = t.correction.bootstrap_threshold;
  c["mixup_beta"] = t.correction.mixup_beta;
  j["correction"] = c;
  j["warmup_mixup"] = t.warmup_mixup;
  j["correction_mixup"] = t.correction_mixup;
  j["enable_correction"] = t.enable_correction;
  j["enable_bootstrap"] = t.enable_bootstrap;
  j["enable_softening"] = t.enable_softening;
  j["bmm_iters"] = t.bmm_iters;
  j["seed"] = t.seed;
  return j;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["format_version"] = cfg.format_version;
  if (cfg.gen) j["gen"] = to_json(*cfg.gen);
  if (cfg.data) {
    nlohmann::ordered_json d;
    d["train"] = cfg.data->train;
    d["test"] = cfg.data->test;
    d["num_classes"] = cfg.data->num_classes;
    j["data"] = d;
  }
  j["train"] = to_json(cfg.train);
  j["output_dir"] = cfg.output_dir;
  return j;
}

}  // namespace dsos
