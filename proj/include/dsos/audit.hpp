#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsos/beta_mixture.hpp"
#include "dsos/core.hpp"
#include "dsos/evalreport.hpp"
#include "dsos/metrics.hpp"
#include "dsos/report.hpp"
#include "dsos/synthgen.hpp"

namespace dsos {

// Standalone assessment of an externally supplied prediction matrix.

/// Rows must sum to 1 within this tolerance before renormalization.
inline constexpr double kStochasticTolerance = 1e-6;

struct PredictionTable {
  std::vector<std::size_t> ids;
  Matrix probs;

  bool operator==(const PredictionTable&) const = default;
};

/// Header `id,p0,...,p{C-1}`.
inline void write_predictions_csv(std::ostream& os, const PredictionTable& t) {
  if (t.ids.size() != t.probs.rows()) throw InputError("write_predictions_csv: id count does not match rows");
  os << "id";
  for (std::size_t c = 0; c < t.probs.cols(); ++c) os << ",p" << c;
  os << '\n';
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    os << t.ids[i];
    for (double p : t.probs.row(i)) os << ',' << format_double(p);
    os << '\n';
  }
}

inline void write_predictions_csv(const std::string& path, const PredictionTable& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_predictions_csv(os, t);
  if (!os) throw IoError("write failed: " + path);
}

/// Validates every row as a probability vector (sum within 1e-6). Rows whose
/// sum is off by more than 1e-12 are rescaled to sum to 1; others are kept
/// bit-exact.
inline PredictionTable read_predictions_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(1, "missing header");
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "id") throw ParseError(1, "header must be id,p0,...,p{C-1}");
  const std::size_t num_classes = header.size() - 1;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (header[1 + c] != "p" + std::to_string(c)) throw ParseError(1, "expected column p" + std::to_string(c));
  }

  PredictionTable t;
  std::vector<double> values;
  std::vector<std::size_t> line_of;
  std::size_t line_no = 1;
  std::vector<double> row(num_classes);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) throw ParseError(line_no, "empty row");
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(fields.size()));
    }
    std::size_t id = 0;
    if (!parse_int(fields[0], id)) throw ParseError(line_no, "bad id '" + std::string(fields[0]) + "'");
    double total = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (!parse_double(fields[1 + c], row[c]) || !std::isfinite(row[c]) || row[c] < 0.0) {
        throw ParseError(line_no, "bad probability '" + std::string(fields[1 + c]) + "'");
      }
      total += row[c];
    }
    if (std::abs(total - 1.0) > kStochasticTolerance) {
      throw ParseError(line_no, "row sums to " + format_double(total) + ", not 1 within 1e-6");
    }
    if (std::abs(total - 1.0) > 1e-12) {
      for (double& p : row) p /= total;
    }
    t.ids.push_back(id);
    values.insert(values.end(), row.begin(), row.end());
    line_of.push_back(line_no);
  }

  std::vector<std::size_t> sorted(t.ids);
  std::vector<std::size_t> idx(t.ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return t.ids[a] < t.ids[b]; });
  for (std::size_t k = 1; k < idx.size(); ++k) {
    if (t.ids[idx[k]] == t.ids[idx[k - 1]]) {
      throw ParseError(line_of[idx[k]], "duplicate id " + std::to_string(t.ids[idx[k]]));
    }
  }

  t.probs = Matrix(t.ids.size(), num_classes);
  t.probs.values() = std::move(values);
  return t;
}

inline PredictionTable read_predictions_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_predictions_csv(is);
}

struct AuditResult {
  std::vector<std::size_t> ids;  // dataset order
  MetricVector metric;
  AssessResult assessment;
  std::optional<RetrievalReport> retrieval;  // when every sample carries truth
};

/// Aligns predictions to the labeled dataset by id, then computes the
/// collision metric against the given labels and assesses it.
inline AuditResult audit(const Dataset& labels, const PredictionTable& predictions, std::size_t bmm_iters = 10) {
  const std::size_t num_classes = predictions.probs.cols();
  if (num_classes < 3) throw ConfigError("audit: the noise pipeline needs at least 3 classes");
  const std::size_t n = labels.size();

  std::vector<std::optional<std::size_t>> row_of(n);
  for (std::size_t r = 0; r < predictions.ids.size(); ++r) {
    const std::size_t id = predictions.ids[r];
    if (id >= n) throw ParseError(r + 2, "unknown id " + std::to_string(id));
    row_of[id] = r;
  }
  Matrix aligned(n, num_classes);
  std::vector<std::size_t> given(n);
  AuditResult out;
  out.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = labels.records[i];
    if (!row_of[rec.id]) throw InputError("audit: no prediction for id " + std::to_string(rec.id));
    if (rec.given_label >= num_classes) {
      throw InputError("audit: label of id " + std::to_string(rec.id) + " exceeds prediction width");
    }
    std::copy_n(predictions.probs.row(*row_of[rec.id]).begin(), num_classes, aligned.row(i).begin());
    given[i] = rec.given_label;
    out.ids[i] = rec.id;
  }

  out.metric = compute_metric_vector(given, aligned, MetricKind::IlCollision);
  out.assessment = n > 0 ? assess_metric(out.metric.values, bmm_iters) : AssessResult{};
  if (n > 0 && labels.has_truth()) {
    const auto truth = require_truth(labels);
    out.retrieval = retrieval_report(out.assessment.samples, truth, out.metric.values);
  }
  return out;
}

inline nlohmann::ordered_json build_audit_report(const AuditResult& r) {
  nlohmann::ordered_json j;
  j["format_version"] = kReportFormatVersion;
  j["retrieval"] = r.retrieval ? to_json(*r.retrieval) : nlohmann::ordered_json(nullptr);
  j["assessments"] = assessment_json(r.assessment, r.ids);
  return j;
}

}  // namespace dsos
