// dsos: generate noisy synthetic datasets, train with dynamic softening of
// out-of-distribution samples, audit external predictions, re-render curves.
//
// Exit codes: 0 success, 1 runtime/training failure, 2 usage/config/parse failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsos/audit.hpp"
#include "dsos/config.hpp"
#include "dsos/report.hpp"
#include "dsos/synthgen.hpp"
#include "dsos/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool disable_correction = false;
  bool disable_softening = false;
  bool disable_bootstrap = false;
  std::optional<bool> warmup_mixup;
  std::string predictions;
  std::string labels;
  std::string report;
  std::size_t bmm_iters = 10;
};

std::string output_dir(const Options& opt, const dsos::ExperimentConfig& cfg) {
  return opt.out.empty() ? cfg.output_dir : opt.out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw dsos::IoError("cannot create output directory '" + dir + "': " + ec.message());
}

dsos::ExperimentConfig load_config(const Options& opt) {
  dsos::ExperimentConfig cfg = dsos::load_experiment_config(opt.config);
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    if (cfg.gen) cfg.gen->seed = *opt.seed;
  }
  if (opt.disable_correction) cfg.train.enable_correction = false;
  if (opt.disable_softening) cfg.train.enable_softening = false;
  if (opt.disable_bootstrap) cfg.train.enable_bootstrap = false;
  if (opt.warmup_mixup) cfg.train.warmup_mixup = *opt.warmup_mixup;
  dsos::validate(cfg.train);
  return cfg;
}

/// Dataset paths in the config are resolved relative to the config file.
std::string resolve(const std::string& config_path, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(config_path).parent_path() / path).string();
}

dsos::Dataset read_dataset(const std::string& path, std::optional<std::size_t> num_classes) {
  if (!fs::exists(path)) throw dsos::ConfigError("dataset file '" + path + "' does not exist");
  return dsos::read_csv(path, num_classes);
}

int cmd_gen(const Options& opt) {
  const dsos::ExperimentConfig cfg = load_config(opt);
  if (!cfg.gen) throw dsos::ConfigError("gen: config has no 'gen' section");
  const std::string dir = output_dir(opt, cfg);
  ensure_dir(dir);
  const dsos::GeneratedData data = dsos::generate(*cfg.gen);
  dsos::write_csv(data.train, (fs::path(dir) / "train.csv").string());
  dsos::write_csv(data.test, (fs::path(dir) / "test.csv").string());

  const dsos::NoiseCounts counts = dsos::count_truth(data.train);
  nlohmann::ordered_json manifest;
  manifest["format_version"] = dsos::kFormatVersion;
  manifest["seed"] = cfg.gen->seed;
  manifest["num_classes"] = cfg.gen->num_classes;
  manifest["feature_dim"] = cfg.gen->feature_dim;
  manifest["train"] = "train.csv";
  manifest["test"] = "test.csv";
  manifest["train_size"] = data.train.size();
  manifest["test_size"] = data.test.size();
  manifest["counts"] = {{"clean", counts.clean}, {"id", counts.id}, {"ood", counts.ood}};
  manifest["gen"] = dsos::to_json(*cfg.gen);
  dsos::write_json_file((fs::path(dir) / "manifest.json").string(), manifest);
  std::cout << "wrote " << dir << "/train.csv (" << counts.clean << " clean, " << counts.id << " id, "
            << counts.ood << " ood), " << dir << "/test.csv\n";
  return 0;
}

int cmd_train(const Options& opt) {
  const dsos::ExperimentConfig cfg = load_config(opt);
  dsos::Dataset train;
  dsos::Dataset test;
  if (cfg.gen) {
    dsos::GeneratedData data = dsos::generate(*cfg.gen);
    train = std::move(data.train);
    test = std::move(data.test);
  } else {
    train = read_dataset(resolve(opt.config, cfg.data->train), cfg.data->num_classes);
    test = read_dataset(resolve(opt.config, cfg.data->test), cfg.data->num_classes);
  }
  const std::string dir = output_dir(opt, cfg);
  ensure_dir(dir);

  const dsos::RunResult result = dsos::run(cfg.train, train, test);
  std::optional<dsos::RetrievalReport> retrieval;
  if (train.has_truth()) {
    retrieval = dsos::retrieval_report(result.final_eval.assessment.samples, dsos::require_truth(train),
                                       result.final_eval.metric.values);
  }
  std::vector<std::size_t> ids;
  for (const auto& r : train.records) ids.push_back(r.id);
  dsos::emit_report((fs::path(dir) / "report.json").string(), dsos::to_json(cfg), result.history, retrieval,
                    result.final_eval.assessment, ids);
  dsos::write_curves_file((fs::path(dir) / "curves.csv").string(), result.history);
  std::cout << "best/last accuracy " << result.history.best_accuracy << " / " << result.history.last_accuracy
            << "; wrote " << dir << "/report.json and curves.csv\n";
  return 0;
}

int cmd_audit(const Options& opt) {
  if (!fs::exists(opt.labels)) throw dsos::ConfigError("labels file '" + opt.labels + "' does not exist");
  if (!fs::exists(opt.predictions)) {
    throw dsos::ConfigError("predictions file '" + opt.predictions + "' does not exist");
  }
  const dsos::Dataset labels = dsos::read_csv(opt.labels);
  const dsos::PredictionTable preds = dsos::read_predictions_csv(opt.predictions);
  const dsos::AuditResult result = dsos::audit(labels, preds, opt.bmm_iters);
  const std::string dir = opt.out.empty() ? "." : opt.out;
  ensure_dir(dir);
  dsos::write_json_file((fs::path(dir) / "audit.json").string(), dsos::build_audit_report(result));
  std::cout << "clean " << result.assessment.count(dsos::Category::Clean) << ", id "
            << result.assessment.count(dsos::Category::Id) << ", ood "
            << result.assessment.count(dsos::Category::Ood) << (result.assessment.fallback ? " (fallback)" : "")
            << "; wrote " << dir << "/audit.json\n";
  return 0;
}

int cmd_report(const Options& opt) {
  if (!fs::exists(opt.report)) throw dsos::ConfigError("report file '" + opt.report + "' does not exist");
  const dsos::TrainHistory h = dsos::history_from_report(dsos::read_json_file(opt.report));
  const std::string dir = opt.out.empty() ? "." : opt.out;
  ensure_dir(dir);
  dsos::write_curves_file((fs::path(dir) / "curves.csv").string(), h);
  std::cout << "wrote " << dir << "/curves.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label training with dynamic softening of out-of-distribution samples"};
  app.require_subcommand(1);
  Options opt;

  auto* gen = app.add_subcommand("gen", "Generate a corrupted synthetic train/test dataset");
  gen->add_option("--config", opt.config, "Experiment config (JSON)")->required();
  gen->add_option("--out", opt.out, "Output directory (overrides output_dir)");
  gen->add_option("--seed", opt.seed, "Override the generator and training seed");

  auto* train = app.add_subcommand("train", "Train and write report.json + curves.csv");
  train->add_option("--config", opt.config, "Experiment config (JSON)")->required();
  train->add_option("--out", opt.out, "Output directory (overrides output_dir)");
  train->add_option("--seed", opt.seed, "Override the generator and training seed");
  train->add_flag("--disable-correction", opt.disable_correction, "Warm-up only for every epoch");
  train->add_flag("--disable-softening", opt.disable_softening, "Skip dynamic softening of targets");
  train->add_flag("--disable-bootstrap", opt.disable_bootstrap, "Skip ID bootstrapping of targets");
  train->add_option("--warmup-mixup", opt.warmup_mixup, "Use mixup during warm-up (true/false)");

  auto* audit = app.add_subcommand("audit", "Assess an external prediction matrix as clean / ID / OOD");
  audit->add_option("--predictions", opt.predictions, "CSV with header id,p0,...,p{C-1}")->required();
  audit->add_option("--labels", opt.labels, "Dataset CSV (id,label,truth[,f...])")->required();
  audit->add_option("--out", opt.out, "Output directory for audit.json");
  audit->add_option("--bmm-iters", opt.bmm_iters, "EM iterations for the Beta mixture")
      ->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Re-render curves.csv from a report file");
  report->add_option("--report", opt.report, "report.json written by train")->required();
  report->add_option("--out", opt.out, "Output directory for curves.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(opt);
    if (train->parsed()) return cmd_train(opt);
    if (audit->parsed()) return cmd_audit(opt);
    if (report->parsed()) return cmd_report(opt);
  } catch (const dsos::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dsos::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dsos::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dsos::ReportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
