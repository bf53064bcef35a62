#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "elmal/runner.hpp"

namespace elmal {
namespace {

namespace fs = std::filesystem;

ExperimentConfig synthetic_config() {
  ExperimentConfig cfg;
  cfg.synthetic = SyntheticParams{20, 18, 2, 0.0, 4};
  cfg.targets = {Target::GR};
  cfg.models = {ModelKind::ALS};
  cfg.folds = 5;
  cfg.threads = 1;
  cfg.als.d = 3;
  cfg.als.epochs = 400;
  cfg.alsdl.als.d = 3;
  cfg.alsdl.als.epochs = 30;
  cfg.alsdl.mlp_train.epochs = 10;
  cfg.active.n_init = 20;
  cfg.active.n_per_query = 20;
  cfg.active.n_max_query = 3;
  cfg.active.elm_inner_epochs = 10;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("elmal_test_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Config, JsonRoundTrip) {
  auto cfg = synthetic_config();
  cfg.seeds = {3, 7};
  cfg.concentrations = {"1"};
  cfg.strategies = {Strategy::Random, Strategy::Elm};
  cfg.alsdl.loss.boundaries = {-0.2, 0.4};
  cfg.alsdl.hidden_layers = {7, 3};
  cfg.active.elm_candidate_subsample = 12;
  const auto back = config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  cfg.als.learning_rate = 0.02;
  EXPECT_NE(config_hash(back), config_hash(cfg));
}

TEST(Config, Validation) {
  ExperimentConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = synthetic_config();
  cfg.dataset_path = "x.csv";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = synthetic_config();
  cfg.synthetic->rank = 30;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"models", {"svd"}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"folds", "ten"}}), ConfigError);
  EXPECT_THROW(parse_target("auc"), ConfigError);
}

TEST(RunBenchmark, EmptyModelListFailsBeforeAnyWork) {
  auto cfg = synthetic_config();
  cfg.models.clear();
  cfg.synthetic.reset();
  cfg.dataset_path = "/nonexistent/never-read.csv";
  EXPECT_THROW(run_benchmark(cfg), ConfigError);
}

TEST(RunBenchmark, MissingDatasetIsReported) {
  auto cfg = synthetic_config();
  cfg.synthetic.reset();
  cfg.dataset_path = "/nonexistent/data.csv";
  EXPECT_THROW(run_benchmark(cfg), ConfigError);
}

TEST(RunBenchmark, RecoversNoiseFreeLowRankMatrix) {
  const auto report = run_benchmark(synthetic_config());
  EXPECT_TRUE(report.failures.empty());
  ASSERT_EQ(report.cv_summary.size(), 1u);
  const auto& row = report.cv_summary[0];
  EXPECT_EQ(row.model, "ALS");
  EXPECT_EQ(row.folds, 5u);
  EXPECT_LT(row.mean_test_loss, 0.05);
  EXPECT_EQ(report.training_curves.size(), 5u * 400u);
}

TEST(RunBenchmark, RowCountsForBothModels) {
  auto cfg = synthetic_config();
  cfg.models = {ModelKind::ALS, ModelKind::ALSDL};
  cfg.targets = {Target::GR, Target::IFD};
  cfg.als.epochs = 20;
  const auto r = run_benchmark(cfg);
  EXPECT_EQ(r.cv_summary.size(), 4u);
  // ALS: 20 epochs per fold; ALSDL: 30 + 10.
  EXPECT_EQ(r.training_curves.size(), 2u * 5u * (20u + 40u));
  for (const auto& row : r.training_curves) EXPECT_TRUE(row.test_loss.has_value());
}

TEST(RunBenchmark, DivergenceIsIsolatedPerCell) {
  auto cfg = synthetic_config();
  cfg.models = {ModelKind::ALS, ModelKind::ALSDL};
  cfg.als.learning_rate = 50.0;
  cfg.als.init_scale = 1.0;
  cfg.als.epochs = 50;
  const auto r = run_benchmark(cfg);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].label, "ALS");
  ASSERT_EQ(r.cv_summary.size(), 1u);
  EXPECT_EQ(r.cv_summary[0].model, "ALSDL");
}

TEST(RunAlStudy, RowCounts) {
  auto cfg = synthetic_config();
  cfg.strategies = {Strategy::Orderly, Strategy::Random};
  cfg.seeds = {0, 1};
  const auto r = run_al_study(cfg);
  EXPECT_TRUE(r.failures.empty());
  // 2 strategies x 2 seeds x (n_max_query + 1) points.
  ASSERT_EQ(r.learning_curves.size(), 16u);
  EXPECT_EQ(r.learning_curves[0].n_labeled, 20u);
  EXPECT_EQ(r.learning_curves[3].n_labeled, 80u);
}

TEST(RunAlStudy, SeedsChangeSyntheticData) {
  auto cfg = synthetic_config();
  const DataSource src(cfg);
  const auto a = src.cells(0), b = src.cells(1);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_FALSE(a[0].matrix.values == b[0].matrix.values);
  EXPECT_TRUE(a[0].matrix.values == src.cells(0)[0].matrix.values);
}

TEST(Aggregate, SingleConcentrationMeanEqualsItself) {
  Report r;
  r.cv_summary.push_back({"GR", "1", "ALS", 0, 10, 0.2, 0.8});
  const auto a = aggregate_concentrations(r);
  ASSERT_EQ(a.cv_summary.size(), 2u);
  EXPECT_EQ(a.cv_summary[1].concentration, kMeanConcentration);
  EXPECT_EQ(a.cv_summary[1].mean_test_loss, 0.2);
  EXPECT_EQ(a.cv_summary[1].mean_test_accuracy, 0.8);
  EXPECT_THROW(aggregate_concentrations(a), ConfigError);
}

TEST(Aggregate, UnweightedMeanAcrossConcentrations) {
  Report r;
  r.cv_summary.push_back({"GR", "0.1", "ALS", 0, 10, 0.1, 0.9});
  r.cv_summary.push_back({"GR", "1", "ALS", 0, 10, 0.3, 0.7});
  r.cv_summary.push_back({"GR", "1", "ALSDL", 0, 10, 0.5, 0.5});
  r.learning_curves.push_back({"random", "GR", "0.1", 0, 0, 40, 0.4, 0.6});
  r.learning_curves.push_back({"random", "GR", "1", 0, 0, 40, 0.2, 0.8});
  TrainingCurveRow t1{"GR", "0.1", "ALS", 0, 0, Stage::ALS, 1, 1.0, 0.5, 2.0, 0.5, {}, {}};
  auto t2 = t1;
  t2.concentration = "1";
  t2.train_loss = 3.0;
  t2.test_loss.reset();
  r.training_curves = {t1, t2};

  const auto a = aggregate_concentrations(r);
  ASSERT_EQ(a.cv_summary.size(), 5u);
  EXPECT_NEAR(a.cv_summary[3].mean_test_loss, 0.2, 1e-15);
  EXPECT_NEAR(a.cv_summary[3].mean_test_accuracy, 0.8, 1e-15);
  EXPECT_EQ(a.cv_summary[4].mean_test_loss, 0.5);
  ASSERT_EQ(a.learning_curves.size(), 3u);
  EXPECT_NEAR(a.learning_curves[2].full_rmse, 0.3, 1e-15);
  ASSERT_EQ(a.training_curves.size(), 3u);
  EXPECT_EQ(a.training_curves[2].train_loss, 2.0);
  EXPECT_FALSE(a.training_curves[2].test_loss.has_value());
}

TEST(WriteReport, HeadersAndManifest) {
  auto cfg = synthetic_config();
  cfg.als.epochs = 5;
  const auto dir = scratch_dir("headers");
  write_report(dir, cfg, aggregate_concentrations(run_benchmark(cfg)), "benchmark");
  const auto curves = slurp(dir / "training_curves.csv");
  EXPECT_EQ(curves.substr(0, curves.find('\n')),
            "target,concentration,model,seed,fold,stage,epoch,train_loss,test_loss,train_accuracy,test_accuracy,"
            "train_penalized_loss,test_penalized_loss");
  const auto summary = slurp(dir / "cv_summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "target,concentration,model,seed,folds,mean_test_loss,mean_test_accuracy");
  EXPECT_EQ(slurp(dir / "learning_curves.csv"),
            "strategy,target,concentration,seed,round,n_labeled,full_rmse,full_accuracy\n");
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m.at("command"), "benchmark");
  EXPECT_EQ(m.at("config_hash"), config_hash(cfg));
  EXPECT_EQ(m.at("rows").at("cv_summary"), 2);
  fs::remove_all(dir);
}

TEST(WriteReport, RerunIsByteIdentical) {
  auto cfg = synthetic_config();
  cfg.models = {ModelKind::ALS, ModelKind::ALSDL};
  cfg.als.epochs = 20;
  cfg.strategies = {Strategy::Random, Strategy::Elm};
  cfg.threads = 0;
  const auto a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b");
  for (const auto& dir : {a, b}) {
    auto report = run_benchmark(cfg);
    const auto al = run_al_study(cfg);
    report.learning_curves = al.learning_curves;
    write_report(dir, cfg, aggregate_concentrations(report), "test");
  }
  for (auto name : {"training_curves.csv", "cv_summary.csv", "learning_curves.csv"}) {
    const auto x = slurp(a / name);
    EXPECT_FALSE(x.empty());
    EXPECT_EQ(x, slurp(b / name)) << name;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

}  // namespace
}  // namespace elmal
