#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsos/beta_mixture.hpp"
#include "dsos/core.hpp"
#include "dsos/correction.hpp"
#include "dsos/evalreport.hpp"
#include "dsos/metrics.hpp"
#include "dsos/nn.hpp"
#include "dsos/synthgen.hpp"

namespace dsos {

/// Epochs are 0-based. Epoch e trains with lr / factor^k where k counts the
/// drop epochs <= e. Epochs e < warmup_end are warm-up epochs.
struct TrainConfig {
  std::size_t epochs = 40;
  std::optional<std::size_t> warmup_end;  // default: first lr drop + 1
  double lr = 0.03;
  std::vector<std::size_t> lr_drop_epochs = {20, 32};
  double lr_drop_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  std::vector<std::size_t> hidden_dims = {64};
  CorrectionParams correction;
  bool warmup_mixup = true;
  bool correction_mixup = false;
  bool enable_correction = true;
  bool enable_bootstrap = true;
  bool enable_softening = true;
  std::size_t bmm_iters = 10;
  std::uint64_t seed = 0;

  std::size_t resolved_warmup_end() const {
    if (!enable_correction) return epochs;
    if (warmup_end) return *warmup_end;
    if (lr_drop_epochs.empty()) throw ConfigError("warmup_end unset and no lr drop epoch to derive it from");
    return *std::min_element(lr_drop_epochs.begin(), lr_drop_epochs.end()) + 1;
  }

  double learning_rate(std::size_t epoch) const {
    double rate = lr;
    for (std::size_t drop : lr_drop_epochs) {
      if (epoch >= drop) rate /= lr_drop_factor;
    }
    return rate;
  }
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0) throw ConfigError("train: epochs must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(cfg.lr_drop_factor > 0.0)) throw ConfigError("train: lr_drop_factor must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
  if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (cfg.bmm_iters == 0) throw ConfigError("train: bmm_iters must be positive");
  for (std::size_t h : cfg.hidden_dims) {
    if (h == 0) throw ConfigError("train: hidden widths must be positive");
  }
  validate(cfg.correction);
  const std::size_t w = cfg.resolved_warmup_end();
  if (w == 0) throw ConfigError("train: warmup_end must be positive");
  if (w > cfg.epochs) throw ConfigError("train: warmup_end exceeds epochs");
}

enum class Phase { Warmup, Correction };

struct EpochRecord {
  std::size_t epoch = 0;
  Phase phase = Phase::Warmup;
  double lr = 0.0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::size_t n_clean = 0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::optional<BetaMixture2> bmm;
  bool fallback = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double best_accuracy = 0.0;
  double last_accuracy = 0.0;
};

/// Independent random streams derived from one seed, so toggling a feature
/// (mixup, correction) never perturbs initialization or data order.
enum class Stream : std::uint32_t { Init = 0, Shuffle = 1, Mixup = 2 };

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline std::uint64_t init_seed(std::uint64_t seed) { return make_stream(seed, Stream::Init)(); }

struct EpochStats {
  double loss = 0.0;
};

/// Training state shared by the epoch functions.
struct TrainingContext {
  Network net;
  OptimizerState optimizer;
  std::mt19937_64 shuffle_rng;
  std::mt19937_64 mixup_rng;
};

inline TrainingContext make_context(const TrainConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(num_classes);
  Network net = Network::initialize(dims, init_seed(cfg.seed));
  OptimizerState opt = OptimizerState::for_network(net, cfg.learning_rate(0), cfg.momentum, cfg.weight_decay);
  return {std::move(net), std::move(opt), make_stream(cfg.seed, Stream::Shuffle),
          make_stream(cfg.seed, Stream::Mixup)};
}

inline Matrix one_hot_targets(std::span<const std::size_t> labels, std::size_t num_classes) {
  Matrix t(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw InputError("label out of range");
    t(i, labels[i]) = 1.0;
  }
  return t;
}

namespace detail {

inline Matrix gather(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) std::copy_n(m.row(rows[k]).begin(), m.cols(), out.row(k).begin());
  return out;
}

/// One shuffled sweep of mini-batches (final short batch kept). `weights`
/// empty means entropy weights of 1.
inline EpochStats sweep(TrainingContext& ctx, const Matrix& features, const Matrix& targets,
                        std::span<const double> weights, const TrainConfig& cfg, bool mixup, std::size_t epoch) {
  const std::size_t n = features.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), ctx.shuffle_rng);

  EpochStats stats;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
    const std::size_t len = std::min(cfg.batch_size, n - start);
    const std::span<const std::size_t> rows(order.data() + start, len);
    Matrix x = gather(features, rows);
    Matrix t = gather(targets, rows);
    std::vector<double> w;
    if (!weights.empty()) {
      w.reserve(len);
      for (std::size_t r : rows) w.push_back(weights[r]);
    }
    if (mixup) {
      const double lambda = sample_mixup_lambda(ctx.mixup_rng, cfg.correction.mixup_beta);
      std::vector<std::size_t> perm(len);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), ctx.mixup_rng);
      MixedBatch mixed = mixup_batch(x, t, lambda, perm);
      x = std::move(mixed.features);
      t = std::move(mixed.labels);
      if (!w.empty()) {
        std::vector<double> mw(len);
        for (std::size_t k = 0; k < len; ++k) mw[k] = lambda * w[k] + (1.0 - lambda) * w[perm[k]];
        w = std::move(mw);
      }
    }
    const Backprop bp = backward(ctx.net, x, t, AuxLoss{cfg.correction.gamma, w});
    if (!std::isfinite(bp.loss.total)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch_index));
    }
    stats.loss += bp.loss.total * static_cast<double>(len);
    sgd_step(ctx.net, bp.gradients, ctx.optimizer);
  }
  stats.loss /= static_cast<double>(n);
  return stats;
}

}  // namespace detail

/// Warm-up: uncorrected labels, optional mixup, entropy penalty with all
/// weights 1.
inline EpochStats warmup_epoch(TrainingContext& ctx, const Matrix& features, std::span<const std::size_t> labels,
                               const TrainConfig& cfg, std::size_t epoch) {
  const Matrix targets = one_hot_targets(labels, ctx.net.num_classes());
  return detail::sweep(ctx, features, targets, {}, cfg, cfg.warmup_mixup, epoch);
}

struct EvalResult {
  Matrix predictions;
  MetricVector metric;
  AssessResult assessment;
};

/// Full forward sweep on a frozen network; the metric is computed against the
/// pristine labels, min-max normalized, and assessed.
inline EvalResult evaluate_metrics(const Network& net, const Matrix& features,
                                   std::span<const std::size_t> pristine_labels, std::size_t bmm_iters) {
  EvalResult out;
  out.predictions = net.forward(features);
  out.metric = compute_metric_vector(pristine_labels, out.predictions, MetricKind::IlCollision);
  out.assessment = assess_metric(out.metric.values, bmm_iters);
  return out;
}

struct CorrectedTargets {
  Matrix bootstrapped;  // y^b
  Matrix targets;       // y^d, the training target
  std::vector<double> entropy_weights;
};

/// Rebuilt from the pristine labels every epoch: optional bootstrapping, then
/// optional dynamic softening. With softening disabled the entropy penalty is
/// unweighted.
inline CorrectedTargets build_targets(std::span<const std::size_t> pristine_labels, const Matrix& predictions,
                                      const AssessResult& assessment, const TrainConfig& cfg) {
  const std::size_t n = pristine_labels.size();
  const std::size_t num_classes = predictions.cols();
  if (predictions.rows() != n || assessment.samples.size() != n) {
    throw InputError("build_targets: predictions / assessments do not match the label count");
  }
  CorrectedTargets out{Matrix(n, num_classes), Matrix(n, num_classes), std::vector<double>(n, 1.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = assessment.samples[i];
    const SoftLabel given = SoftLabel::one_hot(pristine_labels[i], num_classes);
    const SoftLabel yb = cfg.enable_bootstrap
                             ? bootstrap_label(given, predictions.row(i), a.u, cfg.correction.bootstrap_threshold)
                             : given;
    const SoftLabel yd = cfg.enable_softening ? dynamic_soften(yb, a.v, cfg.correction.alpha) : yb;
    std::copy(yb.probs().begin(), yb.probs().end(), out.bootstrapped.row(i).begin());
    std::copy(yd.probs().begin(), yd.probs().end(), out.targets.row(i).begin());
    if (cfg.enable_softening) out.entropy_weights[i] = a.v;
  }
  return out;
}

inline EpochStats correction_epoch(TrainingContext& ctx, const Matrix& features,
                                   std::span<const std::size_t> pristine_labels, const EvalResult& eval,
                                   const TrainConfig& cfg, std::size_t epoch) {
  const CorrectedTargets ct = build_targets(pristine_labels, eval.predictions, eval.assessment, cfg);
  return detail::sweep(ctx, features, ct.targets, ct.entropy_weights, cfg, cfg.correction_mixup, epoch);
}

struct RunResult {
  Network net;
  TrainHistory history;
  EvalResult final_eval;
};

inline RunResult run(const TrainConfig& cfg, const Dataset& train, const Dataset& test) {
  validate(cfg);
  if (train.num_classes < 3) throw ConfigError("train: the noise pipeline needs at least 3 classes");
  if (train.size() == 0) throw ConfigError("train: empty training set");
  if (test.size() == 0) throw ConfigError("train: empty test set");
  if (test.feature_dim() != train.feature_dim()) throw ConfigError("train/test feature widths differ");

  const std::size_t warmup_end = cfg.resolved_warmup_end();
  const Matrix features = train.features();
  const std::vector<std::size_t> pristine = train.labels();
  const Matrix test_features = test.features();
  const std::vector<std::size_t> test_labels = test.labels();

  TrainingContext ctx = make_context(cfg, train.feature_dim(), train.num_classes);
  RunResult result;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    ctx.optimizer.learning_rate = cfg.learning_rate(e);
    EpochRecord rec;
    rec.epoch = e;
    rec.lr = ctx.optimizer.learning_rate;
    if (e < warmup_end) {
      rec.phase = Phase::Warmup;
      rec.train_loss = warmup_epoch(ctx, features, pristine, cfg, e).loss;
    } else {
      rec.phase = Phase::Correction;
      const EvalResult eval = evaluate_metrics(ctx.net, features, pristine, cfg.bmm_iters);
      rec.n_clean = eval.assessment.count(Category::Clean);
      rec.n_id = eval.assessment.count(Category::Id);
      rec.n_ood = eval.assessment.count(Category::Ood);
      rec.bmm = eval.assessment.bmm;
      rec.fallback = eval.assessment.fallback;
      rec.train_loss = correction_epoch(ctx, features, pristine, eval, cfg, e).loss;
    }
    rec.test_accuracy = accuracy(ctx.net.forward(test_features), test_labels);
    result.history.epochs.push_back(rec);
  }
  for (const auto& rec : result.history.epochs) {
    result.history.best_accuracy = std::max(result.history.best_accuracy, rec.test_accuracy);
  }
  result.history.last_accuracy = result.history.epochs.back().test_accuracy;
  result.final_eval = evaluate_metrics(ctx.net, features, pristine, cfg.bmm_iters);
  result.net = std::move(ctx.net);
  return result;
}

}  // namespace dsos
