#pragma once

// Fully connected regression network: tanh hidden layers, linear scalar
// output, trained full-batch with rmsprop under
//
//   loss = RMSE - beta * mean_i penalty(pred_i, truth_i)
//
// where penalty is +1 when prediction and truth fall in the same interval of
// the classification boundaries, -1 when a boundary separates them and 0 on a
// boundary. The penalty is piecewise constant, so gradients come from a smooth
// surrogate tanh(kappa * (pred - c) * (truth - c)) summed over boundaries.

#include <Eigen/Dense>
#include <fmt/core.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "elmal/error.hpp"
#include "elmal/metrics.hpp"
#include "elmal/random.hpp"

namespace elmal {

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::RowVectorXd bias;
  Eigen::MatrixXd weight_sq_avg;
  Eigen::RowVectorXd bias_sq_avg;
};

struct MlpModel {
  std::vector<std::size_t> layer_sizes;
  std::vector<DenseLayer> layers;

  std::size_t input_size() const { return layer_sizes.front(); }
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::RowVectorXd> bias;
};

struct LossConfig {
  double beta = 0.1;
  std::vector<double> boundaries{0.0};
  double surrogate_sharpness = 10.0;
  bool use_smooth_surrogate = true;

  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("loss: beta must be >= 0");
    if (boundaries.empty()) throw ConfigError("loss: at least one boundary required");
    for (std::size_t k = 1; k < boundaries.size(); ++k)
      if (!(boundaries[k - 1] < boundaries[k])) throw ConfigError("loss: boundaries must be strictly increasing");
    if (!(surrogate_sharpness > 0.0)) throw ConfigError("loss: surrogate sharpness must be > 0");
  }
};

struct MlpTrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.001;
  double decay = 0.9;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("rmsprop: learning rate must be > 0");
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("rmsprop: decay must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("rmsprop: epsilon must be > 0");
  }
};

/// Glorot-uniform weights, zero biases, zero rmsprop state.
inline MlpModel init_mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("init_mlp: need at least input and output layers");
  for (auto s : layer_sizes)
    if (s < 1) throw ConfigError("init_mlp: layer sizes must be >= 1");
  Rng rng(seed);
  MlpModel model;
  model.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_sizes[l]), out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weight.resize(in, out);
    for (Eigen::Index a = 0; a < in; ++a)
      for (Eigen::Index b = 0; b < out; ++b) layer.weight(a, b) = uniform(rng, -s, s);
    layer.bias = Eigen::RowVectorXd::Zero(out);
    layer.weight_sq_avg = Eigen::MatrixXd::Zero(in, out);
    layer.bias_sq_avg = Eigen::RowVectorXd::Zero(out);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace detail {

/// Activations per layer; acts[0] is the input batch, acts.back() the n x 1 output.
inline std::vector<Eigen::MatrixXd> forward_pass(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != model.input_size())
    throw DimensionError(fmt::format("mlp: expected {} inputs, got {}", model.input_size(), inputs.cols()));
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::MatrixXd z = acts.back() * layer.weight;
    z.rowwise() += layer.bias;
    if (l + 1 < model.layers.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace detail

/// Outputs for a batch given as rows.
inline Eigen::VectorXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  return detail::forward_pass(model, inputs).back().col(0);
}

inline double forward(const MlpModel& model, const Eigen::VectorXd& input) {
  return forward_batch(model, input.transpose())(0);
}

/// sign( sum_j sign((pred - c_j)(truth - c_j)) - k + 1 ).
inline int sign_penalty(double pred, double truth, std::span<const double> boundaries) {
  int sum = 0;
  for (double c : boundaries) sum += signum((pred - c) * (truth - c));
  return signum(sum - static_cast<int>(boundaries.size()) + 1);
}

/// Reported loss; always uses the exact sign penalty.
inline double penalized_loss(std::span<const double> preds, std::span<const double> truths, const LossConfig& cfg) {
  const double base = rmse(preds, truths);
  long total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += sign_penalty(preds[i], truths[i], cfg.boundaries);
  return base - cfg.beta * static_cast<double>(total) / static_cast<double>(preds.size());
}

/// The objective whose gradient backward() returns: the smooth surrogate when
/// enabled, otherwise the exact penalized loss.
inline double training_objective(std::span<const double> preds, std::span<const double> truths,
                                  const LossConfig& cfg) {
  if (!cfg.use_smooth_surrogate) return penalized_loss(preds, truths, cfg);
  const double base = rmse(preds, truths);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (double c : cfg.boundaries) total += std::tanh(cfg.surrogate_sharpness * (preds[i] - c) * (truths[i] - c));
  return base - cfg.beta * total / static_cast<double>(preds.size());
}

inline double training_objective(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& truths,
                                 const LossConfig& cfg) {
  const Eigen::VectorXd preds = forward_batch(model, inputs);
  return training_objective(std::span<const double>(preds.data(), preds.size()),
                            std::span<const double>(truths.data(), truths.size()), cfg);
}

/// Backpropagated gradients of training_objective with respect to every
/// weight and bias.
inline MlpGradients backward(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& truths,
                             const LossConfig& cfg) {
  if (inputs.rows() == 0) throw ConfigError("backward: empty batch");
  if (inputs.rows() != truths.size()) throw DimensionError("backward: batch/truth length mismatch");
  const auto acts = detail::forward_pass(model, inputs);
  const Eigen::VectorXd preds = acts.back().col(0);
  const auto n = static_cast<double>(preds.size());

  const Eigen::VectorXd resid = preds - truths;
  const double err = std::sqrt(resid.squaredNorm() / n);
  Eigen::VectorXd dpred = err > 0.0 ? Eigen::VectorXd(resid / (n * err)) : Eigen::VectorXd::Zero(preds.size());
  if (cfg.use_smooth_surrogate && cfg.beta != 0.0) {
    const double kappa = cfg.surrogate_sharpness;
    for (Eigen::Index i = 0; i < preds.size(); ++i)
      for (double c : cfg.boundaries) {
        const double t = std::tanh(kappa * (preds(i) - c) * (truths(i) - c));
        dpred(i) -= cfg.beta / n * kappa * (truths(i) - c) * (1.0 - t * t);
      }
  }

  const std::size_t L = model.layers.size();
  MlpGradients g;
  g.weight.resize(L);
  g.bias.resize(L);
  Eigen::MatrixXd delta = dpred;  // dObjective / dz for the current layer
  for (std::size_t l = L; l-- > 0;) {
    g.weight[l] = acts[l].transpose() * delta;
    g.bias[l] = delta.colwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd up = delta * model.layers[l].weight.transpose();
    delta = up.array() * (1.0 - acts[l].array().square());
  }
  return g;
}

/// accumulator <- decay * accumulator + (1 - decay) * g^2
/// parameter   <- parameter - lr * g / (sqrt(accumulator) + epsilon)
inline void rmsprop_step(MlpModel& model, const MlpGradients& grads, const MlpTrainConfig& cfg) {
  if (grads.weight.size() != model.layers.size() || grads.bias.size() != model.layers.size())
    throw DimensionError("rmsprop: gradient layer count mismatch");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const auto& gw = grads.weight[l];
    const auto& gb = grads.bias[l];
    if (gw.rows() != layer.weight.rows() || gw.cols() != layer.weight.cols() || gb.size() != layer.bias.size())
      throw DimensionError("rmsprop: gradient shape mismatch");
    layer.weight_sq_avg = cfg.decay * layer.weight_sq_avg + (1.0 - cfg.decay) * gw.cwiseAbs2();
    layer.bias_sq_avg = cfg.decay * layer.bias_sq_avg + (1.0 - cfg.decay) * gb.cwiseAbs2();
    layer.weight.array() -= cfg.learning_rate * gw.array() / (layer.weight_sq_avg.array().sqrt() + cfg.epsilon);
    layer.bias.array() -= cfg.learning_rate * gb.array() / (layer.bias_sq_avg.array().sqrt() + cfg.epsilon);
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) throw DivergenceError("rmsprop produced non-finite parameters", 0);
  }
}

/// A batch of feature rows with their targets.
struct LabeledBatch {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd truths;
};

struct MlpResult {
  MlpModel model;
  std::vector<EvalPoint> curve;
};

/// Full-batch rmsprop training. Each EvalPoint holds RMSE (loss), exact
/// penalized loss and boundary accuracy at the first boundary.
inline MlpResult train_mlp(MlpModel model, const LabeledBatch& train, const MlpTrainConfig& train_cfg,
                           const LossConfig& loss_cfg, const std::optional<LabeledBatch>& eval = {}) {
  train_cfg.validate();
  loss_cfg.validate();
  if (train.inputs.rows() == 0) throw ConfigError("train_mlp: empty training set");
  const double boundary = loss_cfg.boundaries.front();

  auto measure = [&](const LabeledBatch& b, double& loss, double& acc, std::optional<double>& pen) {
    const Eigen::VectorXd p = forward_batch(model, b.inputs);
    std::span<const double> ps(p.data(), p.size()), ts(b.truths.data(), b.truths.size());
    loss = rmse(ps, ts);
    acc = boundary_accuracy(ps, ts, boundary);
    pen = penalized_loss(ps, ts, loss_cfg);
  };

  MlpResult out;
  out.curve.reserve(train_cfg.epochs);
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const auto grads = backward(model, train.inputs, train.truths, loss_cfg);
    try {
      rmsprop_step(model, grads, train_cfg);
    } catch (const DivergenceError&) {
      throw DivergenceError(fmt::format("mlp diverged at epoch {}", epoch), epoch);
    }
    EvalPoint pt;
    pt.epoch = epoch;
    pt.stage = Stage::MLP;
    measure(train, pt.train_loss, pt.train_accuracy, pt.train_penalized);
    if (!std::isfinite(pt.train_loss)) throw DivergenceError(fmt::format("mlp diverged at epoch {}", epoch), epoch);
    if (eval && eval->inputs.rows() > 0) {
      double l = 0, a = 0;
      measure(*eval, l, a, pt.test_penalized);
      pt.test_loss = l;
      pt.test_accuracy = a;
    }
    out.curve.push_back(pt);
  }
  out.model = std::move(model);
  return out;
}

}  // namespace elmal
