#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsos/core.hpp"
#include "dsos/metrics.hpp"

namespace dsos {

/// Fully connected layer; weights are fan_out x fan_in.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

using ParameterSet = std::vector<DenseLayer>;

inline ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const auto& layer : params) {
    out.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                   std::vector<double>(layer.bias.size(), 0.0)});
  }
  return out;
}

/// Rectifier MLP with a softmax head. Hidden layers use ReLU; the last layer
/// emits C logits.
class Network {
 public:
  Network() = default;

  Network(std::vector<std::size_t> layer_dims, ParameterSet layers)
      : dims_(std::move(layer_dims)), layers_(std::move(layers)) {
    validate();
  }

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Network initialize(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ConfigError("network needs at least input and output widths");
    std::mt19937_64 rng(seed);
    ParameterSet layers;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
      const std::size_t fan_in = layer_dims[l];
      const std::size_t fan_out = layer_dims[l + 1];
      if (fan_in == 0 || fan_out == 0) throw ConfigError("layer widths must be positive");
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      DenseLayer layer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
      for (double& w : layer.weights.values()) w = dist(rng);
      layers.push_back(std::move(layer));
    }
    return Network(std::move(layer_dims), std::move(layers));
  }

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_classes() const { return dims_.back(); }
  const ParameterSet& layers() const noexcept { return layers_; }
  ParameterSet& layers() noexcept { return layers_; }

  /// Pre-activations of every layer for a batch; the last entry holds logits.
  std::vector<Matrix> pre_activations(const Matrix& features) const {
    if (features.cols() != input_dim()) {
      throw InputError("forward: feature width " + std::to_string(features.cols()) +
                       " does not match network input " + std::to_string(input_dim()));
    }
    std::vector<Matrix> z;
    z.reserve(layers_.size());
    const Matrix* input = &features;
    Matrix activated;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const DenseLayer& layer = layers_[l];
      Matrix out(input->rows(), layer.weights.rows());
      for (std::size_t n = 0; n < input->rows(); ++n) {
        const auto x = input->row(n);
        auto y = out.row(n);
        for (std::size_t o = 0; o < layer.weights.rows(); ++o) {
          const auto w = layer.weights.row(o);
          double acc = layer.bias[o];
          for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k];
          y[o] = acc;
        }
      }
      z.push_back(std::move(out));
      if (l + 1 < layers_.size()) {
        activated = z.back();
        for (double& v : activated.values()) v = v > 0.0 ? v : 0.0;
        input = &activated;
      }
    }
    return z;
  }

  Matrix logits(const Matrix& features) const { return std::move(pre_activations(features).back()); }

  /// Softmax probabilities, one row per sample.
  Matrix forward(const Matrix& features) const {
    Matrix probs = logits(features);
    for (std::size_t n = 0; n < probs.rows(); ++n) softmax(probs.row(n), probs.row(n));
    return probs;
  }

  bool operator==(const Network&) const = default;

 private:
  void validate() const {
    if (dims_.size() < 2 || layers_.size() + 1 != dims_.size()) {
      throw ConfigError("network: layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.weights.cols() != dims_[l] || layer.weights.rows() != dims_[l + 1] ||
          layer.bias.size() != dims_[l + 1]) {
        throw ConfigError("network: layer " + std::to_string(l) + " shape does not chain");
      }
      for (double w : layer.weights.values()) {
        if (!std::isfinite(w)) throw ConfigError("network: non-finite weight in layer " + std::to_string(l));
      }
      for (double b : layer.bias) {
        if (!std::isfinite(b)) throw ConfigError("network: non-finite bias in layer " + std::to_string(l));
      }
    }
  }

  std::vector<std::size_t> dims_;
  ParameterSet layers_;
};

// ---------------------------------------------------------------------------
// Losses

/// Mean over the batch of -sum_c t_c ln p_c (probabilities clamped before log).
inline double cross_entropy_soft(const Matrix& probs, const Matrix& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw InputError("cross_entropy_soft: shape mismatch");
  }
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto p = probs.row(n);
    const auto t = targets.row(n);
    for (std::size_t c = 0; c < p.size(); ++c) total -= t[c] * clamped_log(p[c]);
  }
  return total / static_cast<double>(probs.rows());
}

/// Auxiliary term added to the soft cross-entropy: gamma * mean_i w_i H(p_i).
/// An empty weight span means every weight is 1.
struct AuxLoss {
  double entropy_gamma = 0.0;
  std::span<const double> entropy_weights;

  double weight(std::size_t n) const { return entropy_weights.empty() ? 1.0 : entropy_weights[n]; }
};

inline double weighted_entropy(const Matrix& probs, const AuxLoss& aux) {
  if (!aux.entropy_weights.empty() && aux.entropy_weights.size() != probs.rows()) {
    throw InputError("entropy weights length does not match batch");
  }
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < probs.rows(); ++n) total += aux.weight(n) * shannon_entropy(probs.row(n));
  return total / static_cast<double>(probs.rows());
}

struct LossValue {
  double total = 0.0;
  double cross_entropy = 0.0;
  double entropy = 0.0;
};

inline LossValue evaluate_loss(const Network& net, const Matrix& features, const Matrix& targets,
                               const AuxLoss& aux) {
  const Matrix probs = net.forward(features);
  LossValue v;
  v.cross_entropy = cross_entropy_soft(probs, targets);
  v.entropy = aux.entropy_gamma != 0.0 ? weighted_entropy(probs, aux) : 0.0;
  v.total = v.cross_entropy + aux.entropy_gamma * v.entropy;
  return v;
}

struct Backprop {
  LossValue loss;
  ParameterSet gradients;
};

/// Loss and exact gradients w.r.t. every parameter. Targets and entropy weights
/// are constants (no gradient flows into them).
inline Backprop backward(const Network& net, const Matrix& features, const Matrix& targets,
                         const AuxLoss& aux = {}) {
  if (targets.rows() != features.rows() || targets.cols() != net.num_classes()) {
    throw InputError("backward: targets shape does not match batch / class count");
  }
  if (!aux.entropy_weights.empty() && aux.entropy_weights.size() != features.rows()) {
    throw InputError("backward: entropy weights length does not match batch");
  }
  const std::vector<Matrix> z = net.pre_activations(features);
  const std::size_t batch = features.rows();
  const std::size_t num_layers = net.layers().size();
  const double inv_batch = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;

  Backprop out;
  out.gradients = zeros_like(net.layers());

  // dL/dlogits, per sample, already divided by the batch size.
  Matrix delta = z.back();
  for (std::size_t n = 0; n < batch; ++n) {
    auto p = delta.row(n);
    softmax(p, p);
    const auto t = targets.row(n);
    double target_mass = 0.0;
    double ce = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      target_mass += t[c];
      ce -= t[c] * clamped_log(p[c]);
    }
    out.loss.cross_entropy += ce * inv_batch;

    double h = 0.0;
    if (aux.entropy_gamma != 0.0) {
      h = shannon_entropy(p);
      out.loss.entropy += aux.weight(n) * h * inv_batch;
    }
    const double ent_scale = aux.entropy_gamma * aux.weight(n);
    for (std::size_t c = 0; c < p.size(); ++c) {
      // d(-sum t log p)/dz = p * sum(t) - t ; dH/dz = -p (log p + H)
      double g = p[c] * target_mass - t[c];
      if (ent_scale != 0.0) g -= ent_scale * p[c] * (clamped_log(p[c]) + h);
      p[c] = g * inv_batch;
    }
  }
  out.loss.total = out.loss.cross_entropy + aux.entropy_gamma * out.loss.entropy;

  for (std::size_t l = num_layers; l-- > 0;) {
    const DenseLayer& layer = net.layers()[l];
    DenseLayer& grad = out.gradients[l];
    const std::size_t fan_out = layer.weights.rows();
    const std::size_t fan_in = layer.weights.cols();
    for (std::size_t n = 0; n < batch; ++n) {
      const auto d = delta.row(n);
      for (std::size_t o = 0; o < fan_out; ++o) {
        if (d[o] == 0.0) continue;
        grad.bias[o] += d[o];
        auto gw = grad.weights.row(o);
        if (l == 0) {
          const auto x = features.row(n);
          for (std::size_t k = 0; k < fan_in; ++k) gw[k] += d[o] * x[k];
        } else {
          const auto zin = z[l - 1].row(n);
          for (std::size_t k = 0; k < fan_in; ++k) {
            if (zin[k] > 0.0) gw[k] += d[o] * zin[k];
          }
        }
      }
    }
    if (l == 0) break;
    Matrix prev(batch, fan_in);
    for (std::size_t n = 0; n < batch; ++n) {
      const auto d = delta.row(n);
      const auto zin = z[l - 1].row(n);
      auto pd = prev.row(n);
      for (std::size_t o = 0; o < fan_out; ++o) {
        if (d[o] == 0.0) continue;
        const auto w = layer.weights.row(o);
        for (std::size_t k = 0; k < fan_in; ++k) pd[k] += d[o] * w[k];
      }
      for (std::size_t k = 0; k < fan_in; ++k) {
        if (zin[k] <= 0.0) pd[k] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  ParameterSet velocity;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  static OptimizerState for_network(const Network& net, double lr, double momentum, double weight_decay) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
    return {zeros_like(net.layers()), lr, momentum, weight_decay};
  }
};

/// velocity <- momentum * velocity + grad + weight_decay * param;
/// param <- param - lr * velocity.
inline void sgd_step(Network& net, const ParameterSet& grads, OptimizerState& state) {
  ParameterSet& params = net.layers();
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw InputError("sgd_step: parameter / gradient / velocity layer counts differ");
  }
  for (std::size_t l = 0; l < params.size(); ++l) {
    const auto& g = grads[l];
    const auto& p = params[l];
    const auto& v = state.velocity[l];
    if (g.weights.rows() != p.weights.rows() || g.weights.cols() != p.weights.cols() ||
        g.bias.size() != p.bias.size() || v.weights.values().size() != p.weights.values().size() ||
        v.bias.size() != p.bias.size()) {
      throw InputError("sgd_step: shape mismatch in layer " + std::to_string(l));
    }
    for (double x : g.weights.values()) {
      if (!std::isfinite(x)) throw TrainingError("non-finite gradient in layer " + std::to_string(l));
    }
    for (double x : g.bias) {
      if (!std::isfinite(x)) throw TrainingError("non-finite gradient in layer " + std::to_string(l));
    }
  }
  auto update = [&](std::span<double> param, std::span<const double> grad, std::span<double> vel) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      vel[k] = state.momentum * vel[k] + grad[k] + state.weight_decay * param[k];
      param[k] -= state.learning_rate * vel[k];
    }
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weights.values(), grads[l].weights.values(), state.velocity[l].weights.values());
    update(params[l].bias, grads[l].bias, state.velocity[l].bias);
  }
}

}  // namespace dsos
