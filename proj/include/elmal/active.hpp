#pragma once

// Pool-based active learning over a fully known (retrospective) response
// matrix. Each round trains the composite model on the labeled set, records
// its quality on every observed entry, then moves a batch of pool positions
// into the labeled set according to a query strategy.

#include <Eigen/Dense>
#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "elmal/als.hpp"
#include "elmal/alsdl.hpp"
#include "elmal/data.hpp"
#include "elmal/error.hpp"
#include "elmal/metrics.hpp"
#include "elmal/parallel.hpp"
#include "elmal/random.hpp"

namespace elmal {

enum class Strategy { Orderly, Random, Uncertainty, Elm };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Orderly: return "orderly";
    case Strategy::Random: return "random";
    case Strategy::Uncertainty: return "uncertainty";
    case Strategy::Elm: return "elm";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::Orderly, Strategy::Random, Strategy::Uncertainty, Strategy::Elm})
    if (to_string(s) == name) return s;
  throw ConfigError(fmt::format("unknown strategy '{}'", name));
}

struct ActiveConfig {
  std::size_t n_init = 40;
  std::size_t n_per_query = 40;
  std::size_t n_max_query = 8;
  Strategy strategy = Strategy::Elm;
  AlsdlConfig model_cfg{};
  std::size_t elm_inner_epochs = 200;
  // Score only a seeded subset of this many pool candidates (0 scores all).
  std::size_t elm_candidate_subsample = 0;
  bool orderly_column_major = false;
  std::size_t threads = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_init < 1) throw ConfigError("active: n_init must be >= 1");
    if (n_per_query < 1) throw ConfigError("active: n_per_query must be >= 1");
    if (elm_inner_epochs < 1) throw ConfigError("active: elm_inner_epochs must be >= 1");
    model_cfg.validate();
  }
};

struct LearningCurvePoint {
  std::size_t round = 0;
  std::size_t n_labeled = 0;
  double full_rmse = 0.0;
  double full_accuracy = 0.0;
};

struct ActiveState {
  MaskedMatrix matrix;
  std::vector<Position> labeled;  // row-major sorted
  std::vector<Position> pool;     // row-major sorted
  std::size_t round = 0;
  std::vector<LearningCurvePoint> history;

  /// Ground truth restricted to the labeled positions.
  MaskedMatrix labeled_matrix() const { return matrix.restricted_to(labeled); }
};

inline ActiveState init_state(const MaskedMatrix& matrix, const ActiveConfig& cfg) {
  cfg.validate();
  auto all = matrix.observed_positions();
  if (cfg.n_init > all.size())
    throw ConfigError(fmt::format("n_init {} exceeds {} observed positions", cfg.n_init, all.size()));
  Rng rng(derive_seed(cfg.seed, "init"));
  ActiveState s;
  s.matrix = matrix;
  s.labeled = sample_without_replacement(all, cfg.n_init, rng);
  std::sort(s.labeled.begin(), s.labeled.end());
  std::set_difference(all.begin(), all.end(), s.labeled.begin(), s.labeled.end(), std::back_inserter(s.pool));
  return s;
}

/// Moves `picks` from the pool into the labeled set.
inline void apply_query(ActiveState& s, const std::vector<Position>& picks) {
  for (const auto& p : picks) {
    const auto it = std::lower_bound(s.pool.begin(), s.pool.end(), p);
    if (it == s.pool.end() || *it != p) throw ConfigError("queried position is not in the pool");
    s.pool.erase(it);
    s.labeled.insert(std::upper_bound(s.labeled.begin(), s.labeled.end(), p), p);
  }
}

namespace detail {
inline void require_pool(const ActiveState& s, std::size_t n) {
  if (s.pool.empty()) throw ConfigError("query on empty pool");
  if (n < 1) throw ConfigError("query size must be >= 1");
}
}  // namespace detail

/// First n pool positions in row-major (or column-major) order.
inline std::vector<Position> query_orderly(const ActiveState& s, std::size_t n, bool column_major = false) {
  detail::require_pool(s, n);
  std::vector<Position> order = s.pool;
  if (column_major)
    std::stable_sort(order.begin(), order.end(), [](const Position& a, const Position& b) {
      return std::tie(a.col, a.row) < std::tie(b.col, b.row);
    });
  order.resize(std::min(n, order.size()));
  return order;
}

inline std::vector<Position> query_random(const ActiveState& s, std::size_t n, std::uint64_t seed) {
  detail::require_pool(s, n);
  Rng rng(seed);
  return sample_without_replacement(s.pool, n, rng);
}

/// Pool positions whose predictions lie closest to the boundary 0.
inline std::vector<Position> query_uncertainty(const ActiveState& s, const AlsdlModel& model, std::size_t n) {
  detail::require_pool(s, n);
  const Eigen::MatrixXd preds = alsdl_predict_all(model);
  std::vector<std::size_t> order(s.pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto margin = [&](std::size_t k) {
    return std::abs(preds(static_cast<Eigen::Index>(s.pool[k].row), static_cast<Eigen::Index>(s.pool[k].col)));
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return margin(a) < margin(b); });
  std::vector<Position> out;
  for (std::size_t k = 0; k < std::min(n, order.size()); ++k) out.push_back(s.pool[order[k]]);
  return out;
}

struct ElmCandidateScore {
  Position position;
  double expected_loss = 0.0;
};

/// Expected loss of adding each candidate, in pool (row-major) order.
///
/// For candidate c with predicted label yhat_c from the current model, a fresh
/// ALS model is trained on D plus (c, yhat_c) and scored by RMSE against the
/// true labels on D together with the current model's predictions on the rest
/// of the pool (c itself excluded).
inline std::vector<ElmCandidateScore> elm_scores(const ActiveState& s, const AlsdlModel& model,
                                                 const ActiveConfig& cfg, std::uint64_t seed) {
  if (s.pool.empty()) throw ConfigError("query on empty pool");
  const Eigen::MatrixXd current = alsdl_predict_all(model);

  std::vector<Position> candidates = s.pool;
  if (cfg.elm_candidate_subsample > 0 && cfg.elm_candidate_subsample < candidates.size()) {
    Rng rng(derive_seed(seed, "subsample"));
    candidates = sample_without_replacement(candidates, cfg.elm_candidate_subsample, rng);
    std::sort(candidates.begin(), candidates.end());
  }

  // Training values: truth on D, current predictions on the pool.
  MaskedMatrix base = s.matrix;
  base.mask.setZero();
  for (const auto& p : s.labeled) base.mask(p.row, p.col) = 1.0;
  for (const auto& p : s.pool) base.values(p.row, p.col) = current(p.row, p.col);

  AlsConfig inner = cfg.model_cfg.als;
  inner.epochs = cfg.elm_inner_epochs;
  inner.seed = seed;
  inner.record_curve = false;

  std::vector<ElmCandidateScore> scores(candidates.size());
  parallel_for(candidates.size(), cfg.threads, [&](std::size_t k) {
    const Position c = candidates[k];
    MaskedMatrix train = base;
    train.mask(c.row, c.col) = 1.0;
    const auto fitted = train_als(train, inner).embeddings;
    const Eigen::MatrixXd preds = fitted.x * fitted.w;
    double sum = 0.0;
    std::size_t count = 0;
    auto add = [&](const Position& p) {
      const double r = preds(p.row, p.col) - base.values(p.row, p.col);
      sum += r * r;
      ++count;
    };
    for (const auto& p : s.labeled) add(p);
    for (const auto& p : s.pool)
      if (p != c) add(p);
    scores[k] = {c, count ? std::sqrt(sum / static_cast<double>(count)) : 0.0};
  });
  return scores;
}

/// The n candidates with the smallest expected loss, ties in row-major order.
inline std::vector<Position> query_elm(const ActiveState& s, const AlsdlModel& model, std::size_t n,
                                       const ActiveConfig& cfg, std::uint64_t seed) {
  detail::require_pool(s, n);
  if (s.pool.size() == 1) return s.pool;
  auto scores = elm_scores(s, model, cfg, seed);
  std::stable_sort(scores.begin(), scores.end(), [](const ElmCandidateScore& a, const ElmCandidateScore& b) {
    return a.expected_loss < b.expected_loss;
  });
  std::vector<Position> out;
  for (std::size_t k = 0; k < std::min(n, scores.size()); ++k) out.push_back(scores[k].position);
  return out;
}

/// Composite-model config for a given round; identical across strategies so
/// they differ only in what was queried.
inline AlsdlConfig round_model_config(const ActiveConfig& cfg, std::size_t round) {
  AlsdlConfig m = cfg.model_cfg;
  m.als.seed = derive_seed(cfg.seed, fmt::format("als/{}", round));
  m.mlp_train.seed = derive_seed(cfg.seed, fmt::format("mlp/{}", round));
  m.als.record_curve = false;
  return m;
}

struct ActiveResult {
  std::vector<LearningCurvePoint> curve;
  AlsdlModel final_model;
  ActiveState final_state;
};

/// Full-matrix RMSE and boundary accuracy of the composite model.
inline LearningCurvePoint evaluate_full(const MaskedMatrix& truth, const AlsdlModel& model) {
  const Eigen::MatrixXd preds = alsdl_predict_all(model);
  std::vector<double> p, t;
  for (const auto& q : truth.observed_positions()) {
    p.push_back(preds(q.row, q.col));
    t.push_back(truth.values(q.row, q.col));
  }
  return {0, 0, rmse(p, t), boundary_accuracy(p, t, 0.0)};
}

/// Runs the scheme: train, record, stop after n_max_query queries or when the
/// pool is exhausted, otherwise query n_per_query positions and repeat.
inline ActiveResult run_active_learning(const MaskedMatrix& matrix, const ActiveConfig& cfg) {
  ActiveResult out;
  out.final_state = init_state(matrix, cfg);
  auto& s = out.final_state;
  while (true) {
    const auto trained = train_alsdl(s.labeled_matrix(), round_model_config(cfg, s.round));
    out.final_model = trained.model;
    auto pt = evaluate_full(s.matrix, trained.model);
    pt.round = s.round;
    pt.n_labeled = s.labeled.size();
    s.history.push_back(pt);
    if (s.round >= cfg.n_max_query || s.pool.empty()) break;

    const std::uint64_t query_seed = derive_seed(cfg.seed, fmt::format("query/{}", s.round));
    std::vector<Position> picks;
    switch (cfg.strategy) {
      case Strategy::Orderly: picks = query_orderly(s, cfg.n_per_query, cfg.orderly_column_major); break;
      case Strategy::Random: picks = query_random(s, cfg.n_per_query, query_seed); break;
      case Strategy::Uncertainty: picks = query_uncertainty(s, trained.model, cfg.n_per_query); break;
      case Strategy::Elm: picks = query_elm(s, trained.model, cfg.n_per_query, cfg, query_seed); break;
    }
    apply_query(s, picks);
    ++s.round;
  }
  out.curve = s.history;
  return out;
}

}  // namespace elmal
