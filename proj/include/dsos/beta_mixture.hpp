#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsos/core.hpp"
#include "dsos/metrics.hpp"

namespace dsos {

inline constexpr double kBetaClampLo = 1e-4;
inline constexpr double kBetaClampHi = 1.0 - 1e-4;
inline constexpr double kShapeMin = 0.05;
inline constexpr double kShapeMax = 100.0;
inline constexpr std::size_t kMinFitSamples = 20;

inline double clamp_unit(double x) { return std::clamp(x, kBetaClampLo, kBetaClampHi); }

inline double beta_log_pdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("beta_pdf: shapes must be positive");
  x = clamp_unit(x);
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta;
}

inline double beta_pdf(double x, double a, double b) { return std::exp(beta_log_pdf(x, a, b)); }

/// Two-component Beta mixture. Component 1 has the lower mean (ID noise),
/// component 2 the higher mean (OOD noise).
struct BetaMixture2 {
  double a1 = 1.0, b1 = 1.0;
  double a2 = 1.0, b2 = 1.0;
  double w1 = 0.5, w2 = 0.5;

  double mean1() const { return a1 / (a1 + b1); }
  double mean2() const { return a2 / (a2 + b2); }

  bool operator==(const BetaMixture2&) const = default;
};

struct Posterior {
  double p_id = 0.5;
  double p_ood = 0.5;
  bool underflow = false;
};

/// Bayes rule over the two components, evaluated in log space.
inline Posterior posterior(const BetaMixture2& bmm, double x) {
  const double l1 = std::log(bmm.w1) + beta_log_pdf(x, bmm.a1, bmm.b1);
  const double l2 = std::log(bmm.w2) + beta_log_pdf(x, bmm.a2, bmm.b2);
  if (std::isnan(l1) || std::isnan(l2) || (std::isinf(l1) && std::isinf(l2))) {
    return {0.5, 0.5, true};
  }
  Posterior p;
  if (l1 >= l2) {
    const double r = std::exp(l2 - l1);
    p.p_id = 1.0 / (1.0 + r);
    p.p_ood = r / (1.0 + r);
  } else {
    const double r = std::exp(l1 - l2);
    p.p_ood = 1.0 / (1.0 + r);
    p.p_id = r / (1.0 + r);
  }
  return p;
}

/// The ID component has an interior mode only when both shapes exceed 1.
inline bool id_mode_valid(const BetaMixture2& bmm) { return bmm.a1 > 1.0 && bmm.b1 > 1.0; }

namespace detail {

struct ShapeFit {
  double a = 1.0;
  double b = 1.0;
  double weight = 0.0;
};

/// Weighted method of moments. A component with no mass or no spread cannot be
/// moment-matched and is reset to the flat Beta(1, 1).
inline ShapeFit moment_match(std::span<const double> x, std::span<const double> resp) {
  double mass = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mass += resp[i];
    mean += resp[i] * x[i];
  }
  ShapeFit fit;
  fit.weight = mass;
  if (!(mass > 0.0)) return fit;
  mean /= mass;
  double var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) var += resp[i] * (x[i] - mean) * (x[i] - mean);
  var /= mass;
  if (!(var > 1e-12)) return fit;
  const double common = mean * (1.0 - mean) / var - 1.0;
  fit.a = std::clamp(mean * common, kShapeMin, kShapeMax);
  fit.b = std::clamp((1.0 - mean) * common, kShapeMin, kShapeMax);
  return fit;
}

inline BetaMixture2 m_step(std::span<const double> x, std::span<const double> r1, std::span<const double> r2) {
  const ShapeFit c1 = moment_match(x, r1);
  const ShapeFit c2 = moment_match(x, r2);
  const double total = c1.weight + c2.weight;
  BetaMixture2 bmm{c1.a, c1.b, c2.a, c2.b, 0.5, 0.5};
  if (total > 0.0) {
    bmm.w1 = c1.weight / total;
    bmm.w2 = 1.0 - bmm.w1;
  }
  // Keep both weights strictly positive so log-space posteriors stay defined.
  constexpr double kMinWeight = 1e-12;
  bmm.w1 = std::clamp(bmm.w1, kMinWeight, 1.0 - kMinWeight);
  bmm.w2 = 1.0 - bmm.w1;
  return bmm;
}

}  // namespace detail

/// EM for a two-component Beta mixture. Initialized by a median split, then
/// exactly `iters` rounds of E-step + moment-matched M-step. Components are
/// ordered by ascending mean on return.
inline BetaMixture2 fit_beta_mixture(std::span<const double> values, std::size_t iters = 10) {
  if (values.size() < kMinFitSamples) {
    throw FitError("beta mixture needs at least " + std::to_string(kMinFitSamples) + " values, got " +
                   std::to_string(values.size()));
  }
  const std::size_t n = values.size();
  std::vector<double> x(values.begin(), values.end());
  for (double& v : x) v = clamp_unit(v);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> r1(n, 0.0);
  std::vector<double> r2(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) (k < n / 2 ? r1 : r2)[order[k]] = 1.0;

  BetaMixture2 bmm = detail::m_step(x, r1, r2);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const Posterior p = posterior(bmm, x[i]);
      r1[i] = p.p_id;
      r2[i] = p.p_ood;
    }
    bmm = detail::m_step(x, r1, r2);
  }

  if (bmm.mean1() > bmm.mean2()) {
    std::swap(bmm.a1, bmm.a2);
    std::swap(bmm.b1, bmm.b2);
    std::swap(bmm.w1, bmm.w2);
  }
  return bmm;
}

// ---------------------------------------------------------------------------
// Assessment

enum class Category { Clean, Id, Ood };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Clean: return "clean";
    case Category::Id: return "id";
    case Category::Ood: return "ood";
  }
  return "unknown";
}

struct NoiseAssessment {
  double l_detect_raw = 0.0;
  double l_detect_norm = 0.0;
  double u = 0.0;  // ID-noise posterior
  double v = 1.0;  // not-OOD weight; 0 means OOD
  Category category = Category::Clean;

  bool operator==(const NoiseAssessment&) const = default;
};

struct AssessResult {
  std::vector<NoiseAssessment> samples;
  std::optional<BetaMixture2> bmm;  // set when the mixture path was used
  bool fallback = false;            // noisy samples classified by the 0.5 rule
  bool monotone = true;             // u, v non-increasing in the metric on noisy samples
  bool posterior_underflow = false;
  double pivot_norm = 0.0;

  std::size_t count(Category c) const {
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(),
                                                  [c](const NoiseAssessment& a) { return a.category == c; }));
  }
};

/// Threshold applied to normalized values when the mixture cannot be trusted.
inline constexpr double kFallbackThreshold = 0.5;

/// Classifies samples as clean (at or below the pivot) or noisy, then splits
/// noisy samples into ID / OOD with a fitted Beta mixture. Falls back to a
/// fixed threshold when the fit fails or the ID component has no interior mode.
inline AssessResult assess(std::span<const double> raw, std::span<const double> normalized, double pivot_norm,
                           std::size_t bmm_iters = 10) {
  if (raw.size() != normalized.size()) throw InputError("assess: raw and normalized lengths differ");
  AssessResult out;
  out.pivot_norm = pivot_norm;
  out.samples.resize(raw.size());
  std::vector<std::size_t> noisy;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& s = out.samples[i];
    s.l_detect_raw = raw[i];
    s.l_detect_norm = normalized[i];
    if (normalized[i] <= pivot_norm) {
      s.u = 0.0;
      s.v = 1.0;
      s.category = Category::Clean;
    } else {
      noisy.push_back(i);
    }
  }
  if (noisy.empty()) return out;

  std::vector<double> noisy_values;
  noisy_values.reserve(noisy.size());
  for (std::size_t i : noisy) noisy_values.push_back(normalized[i]);

  std::optional<BetaMixture2> bmm;
  try {
    bmm = fit_beta_mixture(noisy_values, bmm_iters);
  } catch (const FitError&) {
    bmm.reset();
  }

  if (!bmm || !id_mode_valid(*bmm)) {
    out.fallback = true;
    for (std::size_t i : noisy) {
      auto& s = out.samples[i];
      if (normalized[i] < kFallbackThreshold) {
        s.u = 1.0;
        s.v = 1.0;
        s.category = Category::Id;
      } else {
        s.u = 0.0;
        s.v = 0.0;
        s.category = Category::Ood;
      }
    }
    return out;
  }

  out.bmm = bmm;
  for (std::size_t i : noisy) {
    const Posterior p = posterior(*bmm, normalized[i]);
    out.posterior_underflow = out.posterior_underflow || p.underflow;
    auto& s = out.samples[i];
    s.u = std::clamp(p.p_id, 0.0, 1.0);
    s.v = std::clamp(1.0 - p.p_ood, 0.0, 1.0);
    s.category = p.p_id >= 0.5 ? Category::Id : Category::Ood;
  }

  std::vector<std::size_t> by_value(noisy);
  std::stable_sort(by_value.begin(), by_value.end(),
                   [&](std::size_t i, std::size_t j) { return normalized[i] < normalized[j]; });
  for (std::size_t k = 1; k < by_value.size(); ++k) {
    const auto& lo = out.samples[by_value[k - 1]];
    const auto& hi = out.samples[by_value[k]];
    if (normalized[by_value[k - 1]] < normalized[by_value[k]] && (hi.u > lo.u || hi.v > lo.v)) {
      out.monotone = false;
      break;
    }
  }
  return out;
}

/// Normalizes a raw il_collision vector, maps the pivot through the same
/// affine map, and assesses.
inline AssessResult assess_metric(std::span<const double> raw, std::size_t bmm_iters = 10) {
  const Normalized norm = minmax_normalize(raw);
  return assess(raw, norm.values, norm.map(kPivot), bmm_iters);
}

}  // namespace dsos
