#pragma once

// Latent-factor model for masked matrices, trained by alternating gradient
// descent on the half squared error over observed positions:
//
//   loss = 1/2 * sum_{(i,j): r_ij = 1} ( x_i . w_j - y_ij )^2
//
// No regularization term and no closed-form per-factor solves.

#include <Eigen/Dense>
#include <fmt/core.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "elmal/data.hpp"
#include "elmal/error.hpp"
#include "elmal/metrics.hpp"
#include "elmal/random.hpp"

namespace elmal {

struct AlsConfig {
  std::size_t d = 5;
  double learning_rate = 0.01;
  std::size_t epochs = 400;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
  // Update both factors from the same residual instead of x-then-w.
  bool simultaneous = false;
  // Per-epoch metrics; switched off for throwaway inner models.
  bool record_curve = true;

  void validate() const {
    if (d < 1) throw ConfigError("als: d must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("als: learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("als: epochs must be >= 1");
    if (!(init_scale >= 0.0)) throw ConfigError("als: init_scale must be >= 0");
  }
};

struct AlsGradients {
  Eigen::MatrixXd grad_x;
  Eigen::MatrixXd grad_w;
};

struct AlsResult {
  EmbeddingPair embeddings;
  std::vector<EvalPoint> curve;
};

inline EmbeddingPair init_embeddings(std::size_t m, std::size_t n, const AlsConfig& cfg) {
  if (m < 1 || n < 1) throw ConfigError("init_embeddings: m and n must be >= 1");
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             D = static_cast<Eigen::Index>(cfg.d);
  Rng rng(cfg.seed);
  EmbeddingPair e;
  e.x.resize(M, D);
  e.w.resize(D, N);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index l = 0; l < D; ++l) e.x(i, l) = uniform(rng, -cfg.init_scale, cfg.init_scale);
  for (Eigen::Index l = 0; l < D; ++l)
    for (Eigen::Index j = 0; j < N; ++j) e.w(l, j) = uniform(rng, -cfg.init_scale, cfg.init_scale);
  return e;
}

namespace detail {

inline void check_dims(const MaskedMatrix& y, const EmbeddingPair& e) {
  if (e.x.cols() != e.w.rows()) throw DimensionError("embedding inner dimensions differ");
  if (e.x.rows() != y.values.rows() || e.w.cols() != y.values.cols())
    throw DimensionError("embedding shape does not match matrix");
  if (y.mask.rows() != y.values.rows() || y.mask.cols() != y.values.cols())
    throw DimensionError("mask shape does not match values");
}

/// r .* (xw - y), with unobserved entries forced to exactly 0 so their stored
/// values (even NaN) never leak in.
inline Eigen::MatrixXd masked_residual(const MaskedMatrix& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w) {
  const Eigen::MatrixXd diff = x * w - y.values;
  return (y.mask.array() != 0.0).select(diff, 0.0);
}

}  // namespace detail

inline double als_loss(const MaskedMatrix& y, const EmbeddingPair& e) {
  detail::check_dims(y, e);
  return 0.5 * detail::masked_residual(y, e.x, e.w).squaredNorm();
}

/// grad_x = (r .* (xw - y)) w^T,  grad_w = x^T (r .* (xw - y)).
inline AlsGradients als_gradients(const MaskedMatrix& y, const EmbeddingPair& e) {
  detail::check_dims(y, e);
  const Eigen::MatrixXd r = detail::masked_residual(y, e.x, e.w);
  return {r * e.w.transpose(), e.x.transpose() * r};
}

/// One alternating epoch: x steps with w fixed, then w steps against the
/// residual recomputed at the new x.
inline EmbeddingPair als_epoch(const MaskedMatrix& y, const EmbeddingPair& e, double alpha, bool simultaneous = false,
                               std::size_t epoch = 0) {
  detail::check_dims(y, e);
  if (!(alpha >= 0.0)) throw ConfigError("als_epoch: learning rate must be non-negative");
  EmbeddingPair next = e;
  if (simultaneous) {
    const Eigen::MatrixXd r = detail::masked_residual(y, e.x, e.w);
    next.x = e.x - alpha * (r * e.w.transpose());
    next.w = e.w - alpha * (e.x.transpose() * r);
  } else {
    next.x = e.x - alpha * (detail::masked_residual(y, e.x, e.w) * e.w.transpose());
    next.w = e.w - alpha * (next.x.transpose() * detail::masked_residual(y, next.x, e.w));
  }
  if (!next.x.allFinite() || !next.w.allFinite())
    throw DivergenceError(fmt::format("als diverged at epoch {}", epoch), epoch);
  return next;
}

inline double predict(const EmbeddingPair& e, std::size_t i, std::size_t j) {
  if (i >= static_cast<std::size_t>(e.x.rows()) || j >= static_cast<std::size_t>(e.w.cols()))
    throw DimensionError("predict: index out of range");
  return e.x.row(static_cast<Eigen::Index>(i)).dot(e.w.col(static_cast<Eigen::Index>(j)));
}

namespace detail {

struct PositionMetrics {
  double loss;
  double accuracy;
};

inline PositionMetrics evaluate_at(const Eigen::MatrixXd& preds, const Eigen::MatrixXd& truth,
                                   const std::vector<Position>& at) {
  std::vector<double> p, t;
  p.reserve(at.size());
  t.reserve(at.size());
  for (const auto& q : at) {
    const auto i = static_cast<Eigen::Index>(q.row), j = static_cast<Eigen::Index>(q.col);
    p.push_back(preds(i, j));
    t.push_back(truth(i, j));
  }
  return {rmse(p, t), boundary_accuracy(p, t, 0.0)};
}

/// Observed positions split into (train, test) by a fold over their
/// row-major enumeration.
inline std::pair<std::vector<Position>, std::vector<Position>> split_positions(
    const MaskedMatrix& y, const std::optional<FoldSplit>& split) {
  auto all = y.observed_positions();
  if (!split) return {std::move(all), {}};
  std::vector<Position> train, test;
  auto pick = [&](std::size_t k) {
    if (k >= all.size()) throw DimensionError("fold index beyond observed positions");
    return all[k];
  };
  for (auto k : split->train_indices) train.push_back(pick(k));
  for (auto k : split->test_indices) test.push_back(pick(k));
  return {std::move(train), std::move(test)};
}

}  // namespace detail

/// Trains from a seeded initialization for cfg.epochs epochs. With a split,
/// only the train positions are visible to the optimizer and the curve also
/// reports held-out RMSE and boundary accuracy.
inline AlsResult train_als(const MaskedMatrix& y, const AlsConfig& cfg, const std::optional<FoldSplit>& split = {}) {
  cfg.validate();
  const auto [train_pos, test_pos] = detail::split_positions(y, split);
  if (train_pos.empty()) throw ConfigError("train_als: no observed training positions");
  const MaskedMatrix train = split ? y.restricted_to(train_pos) : y;

  AlsResult out;
  out.embeddings = init_embeddings(y.rows(), y.cols(), cfg);
  if (cfg.record_curve) out.curve.reserve(cfg.epochs);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    out.embeddings = als_epoch(train, out.embeddings, cfg.learning_rate, cfg.simultaneous, epoch);
    if (!cfg.record_curve) continue;
    const Eigen::MatrixXd preds = out.embeddings.x * out.embeddings.w;
    EvalPoint pt;
    pt.epoch = epoch;
    pt.stage = Stage::ALS;
    const auto tr = detail::evaluate_at(preds, y.values, train_pos);
    pt.train_loss = tr.loss;
    pt.train_accuracy = tr.accuracy;
    if (!std::isfinite(tr.loss)) throw DivergenceError(fmt::format("als diverged at epoch {}", epoch), epoch);
    if (!test_pos.empty()) {
      const auto te = detail::evaluate_at(preds, y.values, test_pos);
      pt.test_loss = te.loss;
      pt.test_accuracy = te.accuracy;
    }
    out.curve.push_back(pt);
  }
  return out;
}

}  // namespace elmal
