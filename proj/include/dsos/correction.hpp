#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsos/core.hpp"
#include "dsos/metrics.hpp"
#include "dsos/nn.hpp"

namespace dsos {

struct CorrectionParams {
  double alpha = 0.05;               // softening temperature scale
  double gamma = 0.4;                // entropy-penalty weight
  double bootstrap_threshold = 0.9;  // bootstrap when u > threshold
  double mixup_beta = 1.0;           // lambda ~ Beta(mixup_beta, mixup_beta)
};

inline void validate(const CorrectionParams& p) {
  if (!(p.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(p.gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
  if (!(p.bootstrap_threshold > 0.0 && p.bootstrap_threshold <= 1.0)) {
    throw ConfigError("bootstrap_threshold must lie in (0, 1]");
  }
  if (!(p.mixup_beta > 0.0)) throw ConfigError("mixup_beta must be positive");
}

/// Replaces the label by the full soft prediction when the ID posterior
/// strictly exceeds the threshold.
inline SoftLabel bootstrap_label(std::span<const double> given, std::span<const double> predicted, double u,
                                 double threshold) {
  if (given.size() != predicted.size()) throw InputError("bootstrap_label: length mismatch");
  const auto& src = u > threshold ? predicted : given;
  return SoftLabel(std::vector<double>(src.begin(), src.end()));
}

/// softmax(v * label / alpha). v = 0 gives the uniform label; v = 1 with a
/// small alpha sharpens toward the mode.
inline SoftLabel dynamic_soften(std::span<const double> label, double v, double alpha) {
  if (!(alpha > 0.0)) throw InputError("dynamic_soften: alpha must be positive");
  std::vector<double> out(label.size());
  for (std::size_t c = 0; c < label.size(); ++c) out[c] = v * label[c] / alpha;
  softmax(out, out);
  return SoftLabel(std::move(out));
}

/// Draws the mixup coefficient from Beta(a, a).
template <typename Rng>
double sample_mixup_lambda(Rng& rng, double a) {
  std::gamma_distribution<double> g(a, 1.0);
  const double x = g(rng);
  const double y = g(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

struct MixedBatch {
  Matrix features;
  Matrix labels;
};

/// x' = lambda x + (1 - lambda) x[perm], same for labels.
inline MixedBatch mixup_batch(const Matrix& features, const Matrix& labels, double lambda,
                              std::span<const std::size_t> permutation) {
  if (features.rows() != labels.rows() || permutation.size() != features.rows()) {
    throw InputError("mixup_batch: batch sizes differ");
  }
  std::vector<bool> seen(permutation.size(), false);
  for (std::size_t j : permutation) {
    if (j >= permutation.size() || seen[j]) throw InputError("mixup_batch: permutation is not a bijection");
    seen[j] = true;
  }
  auto mix = [&](const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t n = 0; n < m.rows(); ++n) {
      const auto a = m.row(n);
      const auto b = m.row(permutation[n]);
      auto o = out.row(n);
      for (std::size_t k = 0; k < o.size(); ++k) o[k] = lambda * a[k] + (1.0 - lambda) * b[k];
    }
    return out;
  };
  return {mix(features), mix(labels)};
}

/// (1/N) sum_i v_i H(probs_i). Added to the loss with weight gamma, so
/// minimizing it makes predictions confident where v is high.
inline double entropy_penalty(const Matrix& probs, std::span<const double> v_weights) {
  if (v_weights.size() != probs.rows()) throw InputError("entropy_penalty: length mismatch");
  return weighted_entropy(probs, AuxLoss{1.0, v_weights});
}

inline double total_loss(const Matrix& probs, const Matrix& targets, std::span<const double> v_weights,
                         const CorrectionParams& params) {
  return cross_entropy_soft(probs, targets) + params.gamma * entropy_penalty(probs, v_weights);
}

}  // namespace dsos
