#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "elmal/error.hpp"
#include "elmal/random.hpp"

namespace elmal {

namespace detail {
inline void check_pair(std::span<const double> preds, std::span<const double> truths) {
  if (preds.empty()) throw ConfigError("metric on empty input");
  if (preds.size() != truths.size()) throw DimensionError("prediction/truth length mismatch");
}
}  // namespace detail

/// sign with sign(0) = 0.
template <typename T>
constexpr int signum(T v) noexcept {
  return (T(0) < v) - (v < T(0));
}

inline double rmse(std::span<const double> preds, std::span<const double> truths) {
  detail::check_pair(preds, truths);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double r = preds[i] - truths[i];
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(preds.size()));
}

/// Fraction of predictions on the same side of `boundary` as the truth. A value
/// exactly on the boundary only matches another value exactly on it.
inline double boundary_accuracy(std::span<const double> preds, std::span<const double> truths,
                                double boundary = 0.0) {
  detail::check_pair(preds, truths);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    hits += signum(preds[i] - boundary) == signum(truths[i] - boundary);
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct FoldSplit {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// k folds over a seeded permutation of [0, n). The first n % k folds get one
/// extra element.
inline std::vector<FoldSplit> kfold_split(std::size_t n_positions, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be at least 2");
  if (k > n_positions) throw ConfigError("kfold_split: k exceeds number of positions");
  std::vector<std::size_t> perm(n_positions);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(perm, rng);

  std::vector<FoldSplit> folds(k);
  const std::size_t base = n_positions / k, extra = n_positions % k;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t q = 0; q < n_positions; ++q) {
      if (q >= start && q < start + size)
        folds[f].test_indices.push_back(perm[q]);
      else
        folds[f].train_indices.push_back(perm[q]);
    }
    start += size;
  }
  return folds;
}

enum class Stage { ALS, MLP };

inline const char* to_string(Stage s) { return s == Stage::ALS ? "als" : "mlp"; }

/// One point on a training curve. The penalized fields are only populated by
/// network training; test fields only when a held-out split exists.
struct EvalPoint {
  std::size_t epoch = 0;
  Stage stage = Stage::ALS;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  std::optional<double> train_penalized;
  std::optional<double> test_penalized;
};

}  // namespace elmal
