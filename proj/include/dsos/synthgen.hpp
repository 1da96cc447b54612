#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dsos/core.hpp"

namespace dsos {

enum class NoiseKind { Clean, IdNoise, Ood };

inline std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Clean: return "clean";
    case NoiseKind::IdNoise: return "id";
    case NoiseKind::Ood: return "ood";
  }
  return "unknown";
}

/// Ground-truth noise tag. `true_label` is meaningful only for IdNoise.
struct Truth {
  NoiseKind kind = NoiseKind::Clean;
  std::size_t true_label = 0;

  static Truth clean() { return {NoiseKind::Clean, 0}; }
  static Truth id_noise(std::size_t true_label) { return {NoiseKind::IdNoise, true_label}; }
  static Truth ood() { return {NoiseKind::Ood, 0}; }

  bool operator==(const Truth&) const = default;
};

struct SampleRecord {
  std::size_t id = 0;
  std::vector<double> features;
  std::size_t given_label = 0;
  std::optional<Truth> truth;

  bool operator==(const SampleRecord&) const = default;
};

struct Dataset {
  std::vector<SampleRecord> records;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t feature_dim() const { return records.empty() ? 0 : records.front().features.size(); }

  Matrix features() const {
    Matrix x(records.size(), feature_dim());
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::copy(records[i].features.begin(), records[i].features.end(), x.row(i).begin());
    }
    return x;
  }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.given_label);
    return out;
  }

  bool has_truth() const {
    return std::all_of(records.begin(), records.end(), [](const SampleRecord& r) { return r.truth.has_value(); });
  }

  bool operator==(const Dataset&) const = default;
};

struct NoiseCounts {
  std::size_t clean = 0;
  std::size_t id = 0;
  std::size_t ood = 0;
  std::size_t unknown = 0;
};

inline NoiseCounts count_truth(const Dataset& d) {
  NoiseCounts n;
  for (const auto& r : d.records) {
    if (!r.truth) {
      ++n.unknown;
      continue;
    }
    switch (r.truth->kind) {
      case NoiseKind::Clean: ++n.clean; break;
      case NoiseKind::IdNoise: ++n.id; break;
      case NoiseKind::Ood: ++n.ood; break;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Generation

/// Defaults reproduce a web-noise composition of 70.30% clean, 24.38% OOD,
/// 5.32% ID noise.
struct GenConfig {
  std::size_t num_classes = 10;
  std::size_t feature_dim = 16;
  std::size_t train_size = 5000;
  std::size_t test_size = 2000;
  double rho = 0.2438;  // OOD fraction of train_size
  double psi = 0.0532;  // ID-flip fraction of train_size
  double class_separation = 3.0;
  double within_class_sigma = 1.0;
  std::size_t num_ood_centers = 4;
  std::uint64_t seed = 0;
};

/// floor(fraction * n), tolerant of representation error in the fraction
/// (0.2438 * 10000 must give 2438, not 2437).
inline std::size_t exact_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

inline void validate(const GenConfig& cfg) {
  if (cfg.num_classes == 0) throw ConfigError("gen: num_classes must be positive");
  if (cfg.feature_dim == 0) throw ConfigError("gen: feature_dim must be positive");
  if (cfg.train_size == 0) throw ConfigError("gen: train_size must be positive");
  if (cfg.test_size == 0) throw ConfigError("gen: test_size must be positive");
  if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw ConfigError("gen: rho must lie in [0, 1)");
  if (!(cfg.psi >= 0.0 && cfg.psi < 1.0)) throw ConfigError("gen: psi must lie in [0, 1)");
  if (!(cfg.rho + cfg.psi < 1.0)) throw ConfigError("gen: rho + psi must be < 1");
  if (exact_count(cfg.rho, cfg.train_size) + exact_count(cfg.psi, cfg.train_size) > cfg.train_size) {
    throw ConfigError("gen: corrupted counts exceed train_size");
  }
  if (cfg.psi > 0.0 && cfg.num_classes < 2) throw ConfigError("gen: ID flips need at least 2 classes");
  if (!(cfg.class_separation > 0.0)) throw ConfigError("gen: class_separation must be positive");
  if (!(cfg.within_class_sigma > 0.0)) throw ConfigError("gen: within_class_sigma must be positive");
  if (cfg.num_ood_centers == 0) throw ConfigError("gen: num_ood_centers must be positive");
}

namespace detail {

inline std::vector<double> random_center(std::mt19937_64& rng, std::size_t dim, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> c(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : c) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : c) x *= radius / norm;
  return c;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

inline std::vector<double> draw_around(std::mt19937_64& rng, const std::vector<double>& center, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<double> x(center);
  for (double& v : x) v += normal(rng);
  return x;
}

}  // namespace detail

struct GeneratedData {
  Dataset train;
  Dataset test;
  std::vector<std::vector<double>> class_centers;
  std::vector<std::vector<double>> ood_centers;
};

/// Gaussian class clusters on a sphere of radius class_separation; OOD
/// clusters are rejection-sampled to sit at least class_separation away from
/// every class center. Corruption counts are exact.
inline GeneratedData generate(const GenConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::vector<double>> class_centers;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    class_centers.push_back(detail::random_center(rng, cfg.feature_dim, cfg.class_separation));
  }

  std::vector<std::vector<double>> ood_centers;
  constexpr int kMaxAttempts = 100000;
  for (std::size_t k = 0; k < cfg.num_ood_centers; ++k) {
    int attempts = 0;
    while (true) {
      if (++attempts > kMaxAttempts) {
        throw ConfigError("gen: could not place OOD center away from class centers");
      }
      auto candidate = detail::random_center(rng, cfg.feature_dim, cfg.class_separation);
      const bool far = std::all_of(class_centers.begin(), class_centers.end(), [&](const auto& c) {
        return detail::distance(candidate, c) >= cfg.class_separation;
      });
      if (far) {
        ood_centers.push_back(std::move(candidate));
        break;
      }
    }
  }

  auto make_clean = [&](std::size_t n) {
    Dataset d;
    d.num_classes = cfg.num_classes;
    d.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cls = i % cfg.num_classes;
      d.records.push_back({i, detail::draw_around(rng, class_centers[cls], cfg.within_class_sigma), cls,
                           Truth::clean()});
    }
    return d;
  };

  GeneratedData out;
  out.train = make_clean(cfg.train_size);

  std::vector<std::size_t> order(cfg.train_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_ood = exact_count(cfg.rho, cfg.train_size);
  const std::size_t n_id = exact_count(cfg.psi, cfg.train_size);
  for (std::size_t k = 0; k < n_ood; ++k) {
    auto& r = out.train.records[order[k]];
    r.features = detail::draw_around(rng, ood_centers[k % ood_centers.size()], cfg.within_class_sigma);
    r.truth = Truth::ood();
  }
  if (n_id > 0) {
    std::uniform_int_distribution<std::size_t> offset(1, cfg.num_classes - 1);
    for (std::size_t k = n_ood; k < n_ood + n_id; ++k) {
      auto& r = out.train.records[order[k]];
      const std::size_t true_label = r.given_label;
      r.given_label = (true_label + offset(rng)) % cfg.num_classes;
      r.truth = Truth::id_noise(true_label);
    }
  }

  out.test = make_clean(cfg.test_size);
  out.class_centers = std::move(class_centers);
  out.ood_centers = std::move(ood_centers);
  return out;
}

// ---------------------------------------------------------------------------
// CSV: id,label,truth,f0,...,f{D-1}

inline std::string truth_to_field(const std::optional<Truth>& truth) {
  if (!truth) return "-";
  switch (truth->kind) {
    case NoiseKind::Clean: return "clean";
    case NoiseKind::IdNoise: return "id:" + std::to_string(truth->true_label);
    case NoiseKind::Ood: return "ood";
  }
  return "-";
}

inline bool truth_from_field(std::string_view field, std::optional<Truth>& out) {
  if (field == "-") {
    out.reset();
  } else if (field == "clean") {
    out = Truth::clean();
  } else if (field == "ood") {
    out = Truth::ood();
  } else if (field.starts_with("id:")) {
    std::size_t label = 0;
    if (!parse_int(field.substr(3), label)) return false;
    out = Truth::id_noise(label);
  } else {
    return false;
  }
  return true;
}

inline void write_csv(std::ostream& os, const Dataset& d) {
  const std::size_t dim = d.feature_dim();
  os << "id,label,truth";
  for (std::size_t k = 0; k < dim; ++k) os << ",f" << k;
  os << '\n';
  for (const auto& r : d.records) {
    if (r.features.size() != dim) throw InputError("write_csv: inconsistent feature width");
    os << r.id << ',' << r.given_label << ',' << truth_to_field(r.truth);
    for (double v : r.features) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_csv(os, d);
  if (!os) throw IoError("write failed: " + path);
}

/// Reads a dataset. Records are returned ordered by id; ids must be unique and
/// contiguous from 0. The class count is taken from `num_classes` when given
/// (labels are then range-checked), otherwise inferred as max label + 1.
inline Dataset read_csv(std::istream& is, std::optional<std::size_t> num_classes = std::nullopt) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line)) throw ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') throw ParseError(1, "CRLF line endings are not accepted");
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "truth") {
    throw ParseError(1, "header must start with id,label,truth");
  }
  const std::size_t dim = header.size() - 3;
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[3 + k] != "f" + std::to_string(k)) {
      throw ParseError(1, "expected feature column f" + std::to_string(k));
    }
  }

  std::vector<SampleRecord> rows;
  std::vector<std::size_t> line_of;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) throw ParseError(line_no, "empty row");
    if (line.back() == '\r') throw ParseError(line_no, "CRLF line endings are not accepted");
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(fields.size()));
    }
    SampleRecord r;
    if (!parse_int(fields[0], r.id)) throw ParseError(line_no, "bad id '" + std::string(fields[0]) + "'");
    if (!parse_int(fields[1], r.given_label)) {
      throw ParseError(line_no, "bad label '" + std::string(fields[1]) + "'");
    }
    if (!truth_from_field(fields[2], r.truth)) {
      throw ParseError(line_no, "bad truth '" + std::string(fields[2]) + "'");
    }
    r.features.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!parse_double(fields[3 + k], r.features[k]) || !std::isfinite(r.features[k])) {
        throw ParseError(line_no, "bad feature value '" + std::string(fields[3 + k]) + "'");
      }
    }
    if (num_classes) {
      if (r.given_label >= *num_classes) throw ParseError(line_no, "label out of range");
      if (r.truth && r.truth->kind == NoiseKind::IdNoise && r.truth->true_label >= *num_classes) {
        throw ParseError(line_no, "true label out of range");
      }
    }
    if (r.truth && r.truth->kind == NoiseKind::IdNoise && r.truth->true_label == r.given_label) {
      throw ParseError(line_no, "ID-noise true label equals given label");
    }
    rows.push_back(std::move(r));
    line_of.push_back(line_no);
  }

  Dataset d;
  d.records.resize(rows.size());
  std::vector<bool> seen(rows.size(), false);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t id = rows[i].id;
    if (id >= rows.size()) {
      throw ParseError(line_of[i], "id " + std::to_string(id) + " breaks the contiguous range 0.." +
                                       std::to_string(rows.size() - 1));
    }
    if (seen[id]) throw ParseError(line_of[i], "duplicate id " + std::to_string(id));
    seen[id] = true;
    max_label = std::max(max_label, rows[i].given_label);
    if (rows[i].truth && rows[i].truth->kind == NoiseKind::IdNoise) {
      max_label = std::max(max_label, rows[i].truth->true_label);
    }
    d.records[id] = std::move(rows[i]);
  }
  d.num_classes = num_classes ? *num_classes : (d.records.empty() ? 0 : max_label + 1);
  return d;
}

inline Dataset read_csv(const std::string& path, std::optional<std::size_t> num_classes = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_csv(is, num_classes);
}

}  // namespace dsos
