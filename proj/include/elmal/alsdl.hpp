#pragma once

// Two-stage composite: ALS factors are learned first, then a network maps the
// concatenated (cell, molecule) factor vectors to the response. The factors
// are frozen during the second stage.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <vector>

#include "elmal/als.hpp"
#include "elmal/data.hpp"
#include "elmal/error.hpp"
#include "elmal/metrics.hpp"
#include "elmal/mlp.hpp"

namespace elmal {

struct AlsdlConfig {
  AlsConfig als{.epochs = 200};
  MlpTrainConfig mlp_train{};
  LossConfig loss{};
  std::vector<std::size_t> hidden_layers{20, 10, 5};
  // Molecule factors first instead of cell factors.
  bool molecule_first = false;

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{2 * als.d};
    sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
    sizes.push_back(1);
    return sizes;
  }

  void validate() const {
    als.validate();
    mlp_train.validate();
    loss.validate();
  }
};

struct AlsdlModel {
  EmbeddingPair embeddings;
  MlpModel net;
  LossConfig loss_cfg;
  bool molecule_first = false;
};

struct AlsdlResult {
  AlsdlModel model;
  std::vector<EvalPoint> curve;
};

/// [x_i., w_.j], or molecule first when requested.
inline Eigen::VectorXd build_features(const EmbeddingPair& e, std::size_t i, std::size_t j,
                                      bool molecule_first = false) {
  if (i >= static_cast<std::size_t>(e.x.rows()) || j >= static_cast<std::size_t>(e.w.cols()))
    throw DimensionError("build_features: index out of range");
  const auto d = e.x.cols();
  Eigen::VectorXd f(2 * d);
  const Eigen::VectorXd cell = e.x.row(static_cast<Eigen::Index>(i)).transpose();
  const Eigen::VectorXd mol = e.w.col(static_cast<Eigen::Index>(j));
  f.head(d) = molecule_first ? mol : cell;
  f.tail(d) = molecule_first ? cell : mol;
  return f;
}

/// Feature rows and matrix values for a list of positions.
inline LabeledBatch feature_batch(const EmbeddingPair& e, const MaskedMatrix& y, const std::vector<Position>& at,
                                  bool molecule_first = false) {
  LabeledBatch b;
  b.inputs.resize(static_cast<Eigen::Index>(at.size()), 2 * e.x.cols());
  b.truths.resize(static_cast<Eigen::Index>(at.size()));
  for (std::size_t k = 0; k < at.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    b.inputs.row(r) = build_features(e, at[k].row, at[k].col, molecule_first).transpose();
    b.truths(r) = y.values(static_cast<Eigen::Index>(at[k].row), static_cast<Eigen::Index>(at[k].col));
  }
  return b;
}

inline double alsdl_predict(const AlsdlModel& model, std::size_t i, std::size_t j) {
  return forward(model.net, build_features(model.embeddings, i, j, model.molecule_first));
}

/// Predictions for every cell of the matrix.
inline Eigen::MatrixXd alsdl_predict_all(const AlsdlModel& model) {
  const auto m = model.embeddings.x.rows(), n = model.embeddings.w.cols();
  std::vector<Position> all;
  all.reserve(static_cast<std::size_t>(m * n));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) all.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  LabeledBatch b;
  b.inputs.resize(m * n, 2 * model.embeddings.x.cols());
  for (std::size_t k = 0; k < all.size(); ++k)
    b.inputs.row(static_cast<Eigen::Index>(k)) =
        build_features(model.embeddings, all[k].row, all[k].col, model.molecule_first).transpose();
  const Eigen::VectorXd flat = forward_batch(model.net, b.inputs);
  Eigen::MatrixXd out(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = flat(i * n + j);
  return out;
}

/// Stage 1 trains ALS on the training positions; stage 2 trains the network on
/// their frozen features. MLP curve epochs continue the ALS numbering.
inline AlsdlResult train_alsdl(const MaskedMatrix& y, const AlsdlConfig& cfg,
                               const std::optional<FoldSplit>& split = {}) {
  cfg.validate();
  auto stage1 = train_als(y, cfg.als, split);
  const auto [train_pos, test_pos] = detail::split_positions(y, split);

  AlsdlResult out;
  out.model.embeddings = std::move(stage1.embeddings);
  out.model.loss_cfg = cfg.loss;
  out.model.molecule_first = cfg.molecule_first;
  out.curve = std::move(stage1.curve);

  const auto train = feature_batch(out.model.embeddings, y, train_pos, cfg.molecule_first);
  std::optional<LabeledBatch> eval;
  if (!test_pos.empty()) eval = feature_batch(out.model.embeddings, y, test_pos, cfg.molecule_first);

  auto net = init_mlp(cfg.layer_sizes(), cfg.mlp_train.seed);
  auto stage2 = train_mlp(std::move(net), train, cfg.mlp_train, cfg.loss, eval);
  out.model.net = std::move(stage2.model);
  for (auto& pt : stage2.curve) {
    pt.epoch += cfg.als.epochs;
    out.curve.push_back(pt);
  }
  return out;
}

}  // namespace elmal
