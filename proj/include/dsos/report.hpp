#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsos/beta_mixture.hpp"
#include "dsos/core.hpp"
#include "dsos/evalreport.hpp"
#include "dsos/trainer.hpp"

namespace dsos {

inline constexpr const char* kReportFormatVersion = "1";

// ---------------------------------------------------------------------------
// Deterministic JSON text: insertion-ordered keys, two-space indent, floating
// point at 17 significant digits, non-finite numbers as null.

namespace detail {

inline void write_json_value(std::ostream& os, const nlohmann::ordered_json& j, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(2 * depth), ' ');
  switch (j.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& item : j.items()) {
        if (!first) os << ",\n";
        first = false;
        os << pad << nlohmann::ordered_json(item.key()).dump() << ": ";
        write_json_value(os, item.value(), depth + 1);
      }
      os << '\n' << close_pad << '}';
      return;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) os << ",\n";
        first = false;
        os << pad;
        write_json_value(os, e, depth + 1);
      }
      os << '\n' << close_pad << ']';
      return;
    }
    case nlohmann::ordered_json::value_t::number_float: {
      const double v = j.get<double>();
      if (std::isfinite(v)) {
        os << format_double(v);
      } else {
        os << "null";
      }
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

inline void write_json(std::ostream& os, const nlohmann::ordered_json& j) {
  detail::write_json_value(os, j, 0);
  os << '\n';
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_json(os, j);
  if (!os) throw IoError("write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ReportError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Report sections

inline nlohmann::ordered_json to_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const BetaMixture2& b) {
  nlohmann::ordered_json j;
  j["a1"] = b.a1;
  j["b1"] = b.b1;
  j["a2"] = b.a2;
  j["b2"] = b.b2;
  j["w1"] = b.w1;
  j["w2"] = b.w2;
  return j;
}

inline nlohmann::ordered_json to_json(const RetrievalReport& r) {
  nlohmann::ordered_json j;
  j["auc_clean"] = to_json(r.auc_clean);
  j["auc_id"] = to_json(r.auc_id);
  j["auc_ood"] = to_json(r.auc_ood);
  j["confusion_order"] = {"clean", "id", "ood"};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.confusion) rows.push_back(row);
  j["confusion"] = rows;
  j["noise_counts"] = {{"clean", r.noise_counts[0]}, {"id", r.noise_counts[1]}, {"ood", r.noise_counts[2]}};
  return j;
}

inline nlohmann::ordered_json assessment_json(const AssessResult& a, std::span<const std::size_t> ids) {
  if (ids.size() != a.samples.size()) throw ReportError("assessment count does not match sample ids");
  nlohmann::ordered_json summary;
  summary["pivot_norm"] = a.pivot_norm;
  summary["fallback"] = a.fallback;
  summary["monotone"] = a.monotone;
  summary["bmm"] = a.bmm ? to_json(*a.bmm) : nlohmann::ordered_json(nullptr);
  summary["n_clean"] = a.count(Category::Clean);
  summary["n_id"] = a.count(Category::Id);
  summary["n_ood"] = a.count(Category::Ood);
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& s = a.samples[i];
    nlohmann::ordered_json row;
    row["id"] = ids[i];
    row["l_detect_raw"] = s.l_detect_raw;
    row["l_detect_norm"] = s.l_detect_norm;
    row["u"] = s.u;
    row["v"] = s.v;
    row["category"] = std::string(to_string(s.category));
    samples.push_back(std::move(row));
  }
  summary["samples"] = std::move(samples);
  return summary;
}

inline nlohmann::ordered_json history_json(const TrainHistory& h) {
  nlohmann::ordered_json curves = nlohmann::ordered_json::array();
  for (const auto& e : h.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["phase"] = e.phase == Phase::Warmup ? "warmup" : "correction";
    row["lr"] = e.lr;
    row["train_loss"] = e.train_loss;
    row["test_acc"] = e.test_accuracy;
    row["n_clean"] = e.n_clean;
    row["n_id"] = e.n_id;
    row["n_ood"] = e.n_ood;
    row["fallback"] = e.fallback;
    row["bmm"] = e.bmm ? to_json(*e.bmm) : nlohmann::ordered_json(nullptr);
    curves.push_back(std::move(row));
  }
  return curves;
}

/// Training report. Key order: format_version, config, per_epoch,
/// best_accuracy, last_accuracy, retrieval, assessments.
inline nlohmann::ordered_json build_report(const nlohmann::ordered_json& config_echo, const TrainHistory& history,
                                           const std::optional<RetrievalReport>& retrieval,
                                           const AssessResult& assessment, std::span<const std::size_t> ids) {
  nlohmann::ordered_json j;
  j["format_version"] = kReportFormatVersion;
  j["config"] = config_echo;
  j["per_epoch"] = history_json(history);
  j["best_accuracy"] = history.best_accuracy;
  j["last_accuracy"] = history.last_accuracy;
  j["retrieval"] = retrieval ? to_json(*retrieval) : nlohmann::ordered_json(nullptr);
  j["assessments"] = assessment_json(assessment, ids);
  return j;
}

inline void emit_report(const std::string& path, const nlohmann::ordered_json& config_echo,
                        const TrainHistory& history, const std::optional<RetrievalReport>& retrieval,
                        const AssessResult& assessment, std::span<const std::size_t> ids) {
  write_json_file(path, build_report(config_echo, history, retrieval, assessment, ids));
}

// ---------------------------------------------------------------------------
// Curves CSV: epoch,lr,train_loss,test_acc,n_clean,n_id,n_ood

inline void write_curves(std::ostream& os, const TrainHistory& h) {
  os << "epoch,lr,train_loss,test_acc,n_clean,n_id,n_ood\n";
  for (const auto& e : h.epochs) {
    os << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.train_loss) << ','
       << format_double(e.test_accuracy) << ',' << e.n_clean << ',' << e.n_id << ',' << e.n_ood << '\n';
  }
}

inline void write_curves_file(const std::string& path, const TrainHistory& h) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_curves(os, h);
  if (!os) throw IoError("write failed: " + path);
}

/// Recovers the per-epoch curves from a parsed report file.
inline TrainHistory history_from_report(const nlohmann::json& report) {
  TrainHistory h;
  try {
    for (const auto& row : report.at("per_epoch")) {
      EpochRecord e;
      e.epoch = row.at("epoch").get<std::size_t>();
      e.phase = row.at("phase").get<std::string>() == "warmup" ? Phase::Warmup : Phase::Correction;
      e.lr = row.at("lr").get<double>();
      e.train_loss = row.at("train_loss").get<double>();
      e.test_accuracy = row.at("test_acc").get<double>();
      e.n_clean = row.at("n_clean").get<std::size_t>();
      e.n_id = row.at("n_id").get<std::size_t>();
      e.n_ood = row.at("n_ood").get<std::size_t>();
      e.fallback = row.at("fallback").get<bool>();
      h.epochs.push_back(e);
    }
    h.best_accuracy = report.at("best_accuracy").get<double>();
    h.last_accuracy = report.at("last_accuracy").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  return h;
}

}  // namespace dsos
