#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsos/beta_mixture.hpp"
#include "dsos/core.hpp"
#include "dsos/nn.hpp"
#include "dsos/synthgen.hpp"

namespace dsos {

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Mann-Whitney U with average ranks, O(N log N).
inline double auc(std::span<const double> scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) throw InputError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InputError("auc: undefined without both positives and negatives");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  double rank_sum = 0.0;
  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k + 1;
    while (end < n && scores[order[end]] == scores[order[k]]) ++end;
    // ranks k+1 .. end share their average
    const double avg_rank = 0.5 * static_cast<double>(k + 1 + end);
    for (std::size_t m = k; m < end; ++m) {
      if (positives[order[m]]) rank_sum += avg_rank;
    }
    k = end;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

/// Same, but returns nullopt instead of throwing when one class is absent.
inline std::optional<double> auc_if_defined(std::span<const double> scores, const std::vector<bool>& positives) {
  const auto n_pos = std::count(positives.begin(), positives.end(), true);
  if (n_pos == 0 || static_cast<std::size_t>(n_pos) == positives.size()) return std::nullopt;
  return auc(scores, positives);
}

inline std::vector<Truth> require_truth(const Dataset& d) {
  std::vector<Truth> out;
  out.reserve(d.size());
  for (const auto& r : d.records) {
    if (!r.truth) throw ReportError("sample " + std::to_string(r.id) + " has no ground-truth tag");
    out.push_back(*r.truth);
  }
  return out;
}

inline std::size_t truth_index(NoiseKind k) {
  switch (k) {
    case NoiseKind::Clean: return 0;
    case NoiseKind::IdNoise: return 1;
    case NoiseKind::Ood: return 2;
  }
  return 0;
}

inline std::size_t category_index(Category c) {
  switch (c) {
    case Category::Clean: return 0;
    case Category::Id: return 1;
    case Category::Ood: return 2;
  }
  return 0;
}

struct TriAuc {
  std::optional<double> clean;
  std::optional<double> id;
  std::optional<double> ood;
};

/// One-vs-all retrieval AUCs of a raw metric: high values flag ID / OOD noise,
/// low values flag clean samples.
inline TriAuc metric_retrieval(std::span<const double> metric, std::span<const Truth> truth) {
  if (metric.size() != truth.size()) throw InputError("metric_retrieval: length mismatch");
  std::vector<double> negated(metric.size());
  std::array<std::vector<bool>, 3> pos;
  for (auto& p : pos) p.resize(metric.size());
  for (std::size_t i = 0; i < metric.size(); ++i) {
    negated[i] = -metric[i];
    pos[truth_index(truth[i].kind)][i] = true;
  }
  TriAuc out;
  out.clean = auc_if_defined(negated, pos[0]);
  out.id = auc_if_defined(metric, pos[1]);
  out.ood = auc_if_defined(metric, pos[2]);
  return out;
}

struct RetrievalReport {
  std::optional<double> auc_clean;  // score: -l_detect
  std::optional<double> auc_id;     // score: u
  std::optional<double> auc_ood;    // score: 1 - v
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [truth][assessed], order clean/id/ood
  std::array<std::size_t, 3> noise_counts{};
};

inline RetrievalReport retrieval_report(std::span<const NoiseAssessment> assessments, std::span<const Truth> truth,
                                        std::span<const double> metric) {
  if (assessments.size() != truth.size() || metric.size() != truth.size()) {
    throw ReportError("retrieval_report: assessments, truth and metric lengths differ");
  }
  const std::size_t n = truth.size();
  RetrievalReport rep;
  std::vector<double> clean_score(n), id_score(n), ood_score(n);
  std::array<std::vector<bool>, 3> pos;
  for (auto& p : pos) p.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = truth_index(truth[i].kind);
    pos[t][i] = true;
    ++rep.noise_counts[t];
    ++rep.confusion[t][category_index(assessments[i].category)];
    clean_score[i] = -metric[i];
    id_score[i] = assessments[i].u;
    ood_score[i] = 1.0 - assessments[i].v;
  }
  rep.auc_clean = auc_if_defined(clean_score, pos[0]);
  rep.auc_id = auc_if_defined(id_score, pos[1]);
  rep.auc_ood = auc_if_defined(ood_score, pos[2]);
  return rep;
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
inline double accuracy(const Matrix& predictions, std::span<const std::size_t> labels) {
  if (predictions.rows() != labels.size()) throw InputError("accuracy: row count mismatch");
  if (labels.empty()) throw InputError("accuracy: empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += argmax(predictions.row(i)) == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double test_accuracy(const Network& net, const Dataset& test) {
  if (test.size() == 0) throw InputError("test_accuracy: empty test set");
  const auto labels = test.labels();
  return accuracy(net.forward(test.features()), labels);
}

}  // namespace dsos
