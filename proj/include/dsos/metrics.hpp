#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsos/core.hpp"

namespace dsos {

// Per-sample noise scores: collision entropy of the interpolated label (the
// detection metric) and the two baselines it is compared against.

enum class MetricKind { IlCollision, IlShannon, SmallLoss };

inline std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::IlCollision: return "il_collision";
    case MetricKind::IlShannon: return "il_shannon";
    case MetricKind::SmallLoss: return "small_loss";
  }
  return "unknown";
}

struct MetricVector {
  std::vector<double> values;
  MetricKind kind = MetricKind::IlCollision;
};

/// Elementwise mean of the given label and the network prediction.
inline SoftLabel interpolated_label(std::span<const double> given, std::span<const double> predicted) {
  if (given.size() != predicted.size()) {
    throw InputError("interpolated_label: length mismatch (" + std::to_string(given.size()) +
                     " vs " + std::to_string(predicted.size()) + ")");
  }
  std::vector<double> out(given.size());
  for (std::size_t c = 0; c < given.size(); ++c) out[c] = 0.5 * (given[c] + predicted[c]);
  return SoftLabel(std::move(out));
}

/// Renyi entropy of order 2, natural log.
inline double collision_entropy(std::span<const double> label) {
  double sum_sq = 0.0;
  for (double p : label) sum_sq += p * p;
  return -std::log(sum_sq);
}

/// -sum p ln p with 0 ln 0 = 0.
inline double shannon_entropy(std::span<const double> label) {
  double h = 0.0;
  for (double p : label) {
    if (p > 0.0) h -= p * clamped_log(p);
  }
  return h;
}

inline double small_loss(std::span<const double> predicted, std::size_t given_class) {
  if (given_class >= predicted.size()) throw InputError("small_loss: class index out of range");
  return -clamped_log(predicted[given_class]);
}

/// Affine map x -> (x - min) * scale. A constant input yields scale 0, so every
/// value (including any mapped threshold) lands on 0.
struct MinMaxMap {
  double min = 0.0;
  double scale = 0.0;

  double operator()(double x) const { return (x - min) * scale; }
};

struct Normalized {
  std::vector<double> values;
  MinMaxMap map;
};

inline Normalized minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw InputError("minmax_normalize: empty input");
  double lo = values[0];
  double hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw InputError("minmax_normalize: non-finite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Normalized out;
  out.map.min = lo;
  out.map.scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  out.values.reserve(values.size());
  for (double v : values) out.values.push_back(std::clamp(out.map(v), 0.0, 1.0));
  return out;
}

/// One metric value per sample, always against the ORIGINAL given labels.
inline MetricVector compute_metric_vector(std::span<const std::size_t> given_labels,
                                          const Matrix& predictions, MetricKind kind) {
  if (predictions.rows() != given_labels.size()) {
    throw InputError("compute_metric_vector: " + std::to_string(predictions.rows()) +
                     " prediction rows for " + std::to_string(given_labels.size()) + " samples");
  }
  const std::size_t num_classes = predictions.cols();
  MetricVector out{std::vector<double>(given_labels.size()), kind};
  for (std::size_t i = 0; i < given_labels.size(); ++i) {
    const auto pred = predictions.row(i);
    if (kind == MetricKind::SmallLoss) {
      out.values[i] = small_loss(pred, given_labels[i]);
      continue;
    }
    const SoftLabel mixed = interpolated_label(SoftLabel::one_hot(given_labels[i], num_classes), pred);
    out.values[i] = kind == MetricKind::IlCollision ? collision_entropy(mixed) : shannon_entropy(mixed);
  }
  return out;
}

}  // namespace dsos
