#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace dsos {

/// Probabilities are clamped to this floor before any logarithm.
inline constexpr double kProbFloor = 1e-12;

/// Collision entropy of a perfectly bimodal (0.5, 0.5) label: -ln 0.5.
inline constexpr double kPivot = std::numbers::ln2;

inline constexpr double kSoftLabelTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes or out-of-range arguments handed to a library call.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid generator / training / experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Beta mixture could not be fitted (too few samples).
class FitError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix. Rows are samples, columns are features or classes.

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Probability helpers

inline double clamped_log(double p) { return std::log(std::clamp(p, kProbFloor, 1.0)); }

/// Numerically stable softmax (max subtraction). `out` may alias `logits`.
inline void softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) return;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - peak);
    total += out[c];
  }
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] /= total;
}

inline bool is_soft_label(std::span<const double> probs, double tol = kSoftLabelTolerance) {
  if (probs.empty()) return false;
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= tol;
}

/// Probability vector over C classes.
class SoftLabel {
 public:
  SoftLabel() = default;
  explicit SoftLabel(std::vector<double> probs) : probs_(std::move(probs)) {}

  static SoftLabel one_hot(std::size_t cls, std::size_t num_classes) {
    if (cls >= num_classes) throw InputError("one_hot: class index out of range");
    std::vector<double> p(num_classes, 0.0);
    p[cls] = 1.0;
    return SoftLabel(std::move(p));
  }

  static SoftLabel uniform(std::size_t num_classes) {
    if (num_classes == 0) throw InputError("uniform: zero classes");
    return SoftLabel(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  double& operator[](std::size_t c) { return probs_[c]; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  operator std::span<const double>() const noexcept { return probs_; }

  bool valid() const { return is_soft_label(probs_); }

  bool operator==(const SoftLabel&) const = default;

 private:
  std::vector<double> probs_;
};

/// Lowest index among the maxima.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Text helpers shared by the CSV and JSON writers.

/// 17 significant digits; round-trips every finite double exactly.
inline std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  if (ec != std::errc{}) throw IoError("format_double: conversion failed");
  return std::string(buf, end);
}

inline bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace dsos
