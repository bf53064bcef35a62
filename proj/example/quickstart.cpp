// Trains ALS and ALSDL on a synthetic low-rank matrix, then runs a short
// ELM-vs-random active-learning comparison.

#include <fmt/core.h>

#include "elmal/elmal.hpp"

int main() {
  using namespace elmal;

  const auto truth = generate_synthetic(20, 18, 3, 0.05, 7);
  const auto folds = kfold_split(truth.matrix.observed_count(), 5, 1);

  AlsConfig als;
  als.seed = 3;
  const auto fitted = train_als(truth.matrix, als, folds[0]);
  fmt::print("ALS   fold 0: test RMSE {:.4f}, test accuracy {:.3f}\n", *fitted.curve.back().test_loss,
             *fitted.curve.back().test_accuracy);

  AlsdlConfig composite;
  composite.als.seed = 3;
  const auto net = train_alsdl(truth.matrix, composite, folds[0]);
  fmt::print("ALSDL fold 0: test RMSE {:.4f}, test accuracy {:.3f}\n", *net.curve.back().test_loss,
             *net.curve.back().test_accuracy);

  ActiveConfig active;
  active.n_init = 20;
  active.n_per_query = 20;
  active.n_max_query = 3;
  active.seed = 11;
  for (auto strategy : {Strategy::Random, Strategy::Elm}) {
    active.strategy = strategy;
    const auto run = run_active_learning(truth.matrix, active);
    for (const auto& pt : run.curve)
      fmt::print("{:>6} round {} labeled {:3d}: RMSE {:.4f} accuracy {:.3f}\n", to_string(strategy), pt.round,
                 pt.n_labeled, pt.full_rmse, pt.full_accuracy);
  }
}
