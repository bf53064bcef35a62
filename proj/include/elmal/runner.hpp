#pragma once

// Experiment runner: cross-validated model benchmarks, active-learning
// studies, concentration averaging and CSV/JSON report emission.

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "elmal/active.hpp"
#include "elmal/als.hpp"
#include "elmal/alsdl.hpp"
#include "elmal/data.hpp"
#include "elmal/error.hpp"
#include "elmal/metrics.hpp"
#include "elmal/parallel.hpp"
#include "elmal/random.hpp"

namespace elmal {

enum class ModelKind { ALS, ALSDL };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::ALS ? "ALS" : "ALSDL"; }

inline ModelKind parse_model(std::string_view s) {
  if (s == "als" || s == "ALS") return ModelKind::ALS;
  if (s == "alsdl" || s == "ALSDL") return ModelKind::ALSDL;
  throw ConfigError(fmt::format("unknown model '{}'", s));
}

inline Target parse_target(std::string_view s) {
  if (s == "gr" || s == "GR") return Target::GR;
  if (s == "ifd" || s == "IFD") return Target::IFD;
  throw ConfigError(fmt::format("unknown target '{}'", s));
}

struct SyntheticParams {
  std::size_t m = 35;
  std::size_t n = 34;
  std::size_t rank = 5;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::optional<std::string> dataset_path;
  ColumnMap columns;
  std::optional<SyntheticParams> synthetic;
  std::vector<Target> targets{Target::GR, Target::IFD};
  std::vector<std::string> concentrations;  // empty: every common concentration
  std::vector<ModelKind> models{ModelKind::ALS, ModelKind::ALSDL};
  std::vector<Strategy> strategies{Strategy::Orderly, Strategy::Random, Strategy::Uncertainty, Strategy::Elm};
  std::vector<std::uint64_t> seeds{0};
  std::size_t folds = 10;
  AlsConfig als{};
  AlsdlConfig alsdl{};
  ActiveConfig active{};
  std::size_t threads = 0;
  std::string output_dir = "out";

  void validate() const {
    if (dataset_path.has_value() == synthetic.has_value())
      throw ConfigError("exactly one of dataset_path or synthetic must be set");
    if (targets.empty()) throw ConfigError("at least one target is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (synthetic && (synthetic->rank > std::min(synthetic->m, synthetic->n) || synthetic->rank == 0))
      throw ConfigError("synthetic rank must be in [1, min(m, n)]");
    als.validate();
    alsdl.validate();
    active.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const AlsConfig& c) {
  return {{"d", c.d}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"init_scale", c.init_scale},
          {"simultaneous", c.simultaneous}};
}

inline void from_json(const nlohmann::json& j, AlsConfig& c) {
  c.d = j.value("d", c.d);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.simultaneous = j.value("simultaneous", c.simultaneous);
}

inline nlohmann::json to_json(const AlsdlConfig& c) {
  return {{"als", to_json(c.als)},
          {"mlp", {{"epochs", c.mlp_train.epochs},
                   {"learning_rate", c.mlp_train.learning_rate},
                   {"decay", c.mlp_train.decay},
                   {"epsilon", c.mlp_train.epsilon}}},
          {"loss", {{"beta", c.loss.beta},
                    {"boundaries", c.loss.boundaries},
                    {"surrogate_sharpness", c.loss.surrogate_sharpness},
                    {"use_smooth_surrogate", c.loss.use_smooth_surrogate}}},
          {"hidden_layers", c.hidden_layers},
          {"molecule_first", c.molecule_first}};
}

inline void from_json(const nlohmann::json& j, AlsdlConfig& c) {
  if (j.contains("als")) from_json(j.at("als"), c.als);
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    c.mlp_train.epochs = m.value("epochs", c.mlp_train.epochs);
    c.mlp_train.learning_rate = m.value("learning_rate", c.mlp_train.learning_rate);
    c.mlp_train.decay = m.value("decay", c.mlp_train.decay);
    c.mlp_train.epsilon = m.value("epsilon", c.mlp_train.epsilon);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss.beta = l.value("beta", c.loss.beta);
    c.loss.boundaries = l.value("boundaries", c.loss.boundaries);
    c.loss.surrogate_sharpness = l.value("surrogate_sharpness", c.loss.surrogate_sharpness);
    c.loss.use_smooth_surrogate = l.value("use_smooth_surrogate", c.loss.use_smooth_surrogate);
  }
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.molecule_first = j.value("molecule_first", c.molecule_first);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.dataset_path) j["dataset_path"] = *c.dataset_path;
  j["columns"] = {{"cell", c.columns.cell},
                  {"molecule", c.columns.molecule},
                  {"concentration", c.columns.concentration},
                  {"gr", c.columns.gr},
                  {"ifd", c.columns.ifd}};
  if (c.synthetic)
    j["synthetic"] = {{"m", c.synthetic->m},
                      {"n", c.synthetic->n},
                      {"rank", c.synthetic->rank},
                      {"noise_sd", c.synthetic->noise_sd},
                      {"seed", c.synthetic->seed}};
  auto& targets = j["targets"] = nlohmann::json::array();
  for (auto t : c.targets) targets.push_back(to_string(t));
  j["concentrations"] = c.concentrations;
  auto& models = j["models"] = nlohmann::json::array();
  for (auto m : c.models) models.push_back(to_string(m));
  auto& strategies = j["strategies"] = nlohmann::json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  j["seeds"] = c.seeds;
  j["folds"] = c.folds;
  j["als"] = to_json(c.als);
  j["alsdl"] = to_json(c.alsdl);
  j["active"] = {{"n_init", c.active.n_init},
                 {"n_per_query", c.active.n_per_query},
                 {"n_max_query", c.active.n_max_query},
                 {"elm_inner_epochs", c.active.elm_inner_epochs},
                 {"elm_candidate_subsample", c.active.elm_candidate_subsample},
                 {"orderly_column_major", c.active.orderly_column_major}};
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  return j;
}

/// Reads a config; absent keys keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("columns")) {
      const auto& col = j.at("columns");
      c.columns.cell = col.value("cell", c.columns.cell);
      c.columns.molecule = col.value("molecule", c.columns.molecule);
      c.columns.concentration = col.value("concentration", c.columns.concentration);
      c.columns.gr = col.value("gr", c.columns.gr);
      c.columns.ifd = col.value("ifd", c.columns.ifd);
    }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      SyntheticParams params;
      params.m = s.value("m", params.m);
      params.n = s.value("n", params.n);
      params.rank = s.value("rank", params.rank);
      params.noise_sd = s.value("noise_sd", params.noise_sd);
      params.seed = s.value("seed", params.seed);
      c.synthetic = params;
    }
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j.at("targets")) c.targets.push_back(parse_target(t.get<std::string>()));
    }
    c.concentrations = j.value("concentrations", c.concentrations);
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_model(m.get<std::string>()));
    }
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    c.seeds = j.value("seeds", c.seeds);
    c.folds = j.value("folds", c.folds);
    if (j.contains("als")) from_json(j.at("als"), c.als);
    if (j.contains("alsdl")) from_json(j.at("alsdl"), c.alsdl);
    if (j.contains("active")) {
      const auto& a = j.at("active");
      c.active.n_init = a.value("n_init", c.active.n_init);
      c.active.n_per_query = a.value("n_per_query", c.active.n_per_query);
      c.active.n_max_query = a.value("n_max_query", c.active.n_max_query);
      c.active.elm_inner_epochs = a.value("elm_inner_epochs", c.active.elm_inner_epochs);
      c.active.elm_candidate_subsample = a.value("elm_candidate_subsample", c.active.elm_candidate_subsample);
      c.active.orderly_column_major = a.value("orderly_column_major", c.active.orderly_column_major);
    }
    c.threads = j.value("threads", c.threads);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  return c;
}

/// FNV-1a over the canonical JSON dump.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : to_json(c).dump()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------------------
// Report

struct TrainingCurveRow {
  std::string target, concentration, model;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  Stage stage = Stage::ALS;
  std::size_t epoch = 0;
  double train_loss = 0, train_accuracy = 0;
  std::optional<double> test_loss, test_accuracy, train_penalized, test_penalized;
};

struct CvSummaryRow {
  std::string target, concentration, model;
  std::uint64_t seed = 0;
  std::size_t folds = 0;
  double mean_test_loss = 0, mean_test_accuracy = 0;
};

struct LearningCurveRow {
  std::string strategy, target, concentration;
  std::uint64_t seed = 0;
  std::size_t round = 0, n_labeled = 0;
  double full_rmse = 0, full_accuracy = 0;
};

struct FailureRecord {
  std::string target, concentration, label;
  std::uint64_t seed = 0;
  std::string message;
};

struct Report {
  std::vector<TrainingCurveRow> training_curves;
  std::vector<CvSummaryRow> cv_summary;
  std::vector<LearningCurveRow> learning_curves;
  std::vector<FailureRecord> failures;
  std::optional<DatasetSummary> dataset;
};

inline constexpr const char* kMeanConcentration = "mean";

/// One response matrix of the experiment grid.
struct MatrixCell {
  Target target;
  std::string concentration;
  MaskedMatrix matrix;
};

/// Resolves the data source into per-(target, concentration) matrices. For
/// synthetic sources the data depends on the run seed.
class DataSource {
 public:
  explicit DataSource(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg.dataset_path) {
      std::ifstream in(*cfg.dataset_path, std::ios::binary);
      if (!in) throw ConfigError(fmt::format("cannot open dataset '{}'", *cfg.dataset_path));
      observations_ = parse_dataset(in, cfg.columns);
      summary_ = summarize(observations_);
    }
  }

  const std::optional<DatasetSummary>& summary() const { return summary_; }

  std::vector<MatrixCell> cells(std::uint64_t run_seed) const {
    std::vector<Observation> synthetic;
    const std::vector<Observation>* obs = &observations_;
    if (cfg_.synthetic) {
      const auto& s = *cfg_.synthetic;
      const auto base = derive_seed(s.seed, run_seed);
      const auto gr = generate_synthetic(s.m, s.n, s.rank, s.noise_sd, derive_seed(base, "gr"));
      const auto ifd = generate_synthetic(s.m, s.n, s.rank, s.noise_sd, derive_seed(base, "ifd"), Target::IFD);
      synthetic = synthetic_observations(gr.matrix, ifd.matrix, Concentration::from_value(1.0));
      obs = &synthetic;
    }
    const auto common = select_common_concentrations(*obs);
    std::vector<Concentration> chosen;
    if (cfg_.concentrations.empty()) {
      chosen.assign(common.begin(), common.end());
    } else {
      for (const auto& key : cfg_.concentrations) {
        double v = 0;
        if (!detail::parse_double(key, v)) throw ConfigError(fmt::format("bad concentration '{}'", key));
        chosen.push_back(Concentration::from_value(v));
      }
    }
    if (chosen.empty()) throw ConfigError("no fully covered concentration in the data");
    std::vector<MatrixCell> out;
    for (auto t : cfg_.targets)
      for (const auto& c : chosen) out.push_back({t, c.key, build_response_matrix(*obs, t, c)});
    return out;
  }

 private:
  const ExperimentConfig& cfg_;
  std::vector<Observation> observations_;
  std::optional<DatasetSummary> summary_;
};

/// k-fold cross-validation of each requested model on every grid cell.
inline Report run_benchmark(const ExperimentConfig& cfg) {
  if (cfg.models.empty()) throw ConfigError("benchmark: model list is empty");
  cfg.validate();
  const DataSource source(cfg);

  struct Job {
    std::size_t cell;  // index into grid
    std::size_t fold;
  };
  struct GridCell {
    std::uint64_t seed;
    MatrixCell data;
    ModelKind model;
    std::vector<FoldSplit> splits;
  };
  std::vector<GridCell> grid;
  for (auto seed : cfg.seeds)
    for (auto& mc : source.cells(seed)) {
      const auto split_seed =
          derive_seed(seed, fmt::format("folds/{}/{}", to_string(mc.target), mc.concentration));
      auto splits = kfold_split(mc.matrix.observed_count(), cfg.folds, split_seed);
      for (auto model : cfg.models) grid.push_back({seed, mc, model, splits});
    }

  std::vector<Job> jobs;
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (std::size_t f = 0; f < cfg.folds; ++f) jobs.push_back({g, f});

  struct JobResult {
    std::vector<EvalPoint> curve;
    std::string error;
  };
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t k) {
    const auto& cell = grid[jobs[k].cell];
    const auto fold = jobs[k].fold;
    try {
      if (cell.model == ModelKind::ALS) {
        AlsConfig als = cfg.als;
        als.seed = derive_seed(cell.seed, fmt::format("als/fold/{}", fold));
        results[k].curve = train_als(cell.data.matrix, als, cell.splits[fold]).curve;
      } else {
        AlsdlConfig m = cfg.alsdl;
        m.als.seed = derive_seed(cell.seed, fmt::format("als/fold/{}", fold));
        m.mlp_train.seed = derive_seed(cell.seed, fmt::format("mlp/fold/{}", fold));
        results[k].curve = train_alsdl(cell.data.matrix, m, cell.splits[fold]).curve;
      }
    } catch (const DivergenceError& e) {
      results[k].error = e.what();
    }
  });

  Report report;
  report.dataset = source.summary();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& cell = grid[g];
    const std::string target{to_string(cell.data.target)}, model{to_string(cell.model)};
    std::string error;
    for (std::size_t f = 0; f < cfg.folds && error.empty(); ++f) error = results[g * cfg.folds + f].error;
    if (!error.empty()) {
      report.failures.push_back({target, cell.data.concentration, model, cell.seed, error});
      continue;
    }
    double loss = 0, acc = 0;
    for (std::size_t f = 0; f < cfg.folds; ++f) {
      const auto& curve = results[g * cfg.folds + f].curve;
      for (const auto& pt : curve)
        report.training_curves.push_back({target, cell.data.concentration, model, cell.seed, f, pt.stage, pt.epoch,
                                          pt.train_loss, pt.train_accuracy, pt.test_loss, pt.test_accuracy,
                                          pt.train_penalized, pt.test_penalized});
      loss += curve.back().test_loss.value_or(0.0);
      acc += curve.back().test_accuracy.value_or(0.0);
    }
    const auto k = static_cast<double>(cfg.folds);
    report.cv_summary.push_back({target, cell.data.concentration, model, cell.seed, cfg.folds, loss / k, acc / k});
  }
  return report;
}

/// Active-learning runs for every target x concentration x strategy x seed.
inline Report run_al_study(const ExperimentConfig& cfg) {
  if (cfg.strategies.empty()) throw ConfigError("al-study: strategy list is empty");
  cfg.validate();
  const DataSource source(cfg);

  struct Run {
    std::uint64_t seed;
    MatrixCell data;
    Strategy strategy;
  };
  std::vector<Run> runs;
  for (auto seed : cfg.seeds)
    for (auto& mc : source.cells(seed))
      for (auto s : cfg.strategies) runs.push_back({seed, mc, s});

  struct RunResult {
    std::vector<LearningCurvePoint> curve;
    std::string error;
  };
  std::vector<RunResult> results(runs.size());
  // Runs are the unit of parallelism; ELM scoring inside a run stays serial.
  parallel_for(runs.size(), cfg.threads, [&](std::size_t k) {
    ActiveConfig a = cfg.active;
    a.model_cfg = cfg.alsdl;
    a.strategy = runs[k].strategy;
    a.threads = 1;
    a.seed = derive_seed(runs[k].seed, fmt::format("al/{}/{}", to_string(runs[k].data.target),
                                                   runs[k].data.concentration));
    try {
      results[k].curve = run_active_learning(runs[k].data.matrix, a).curve;
    } catch (const DivergenceError& e) {
      results[k].error = e.what();
    }
  });

  Report report;
  report.dataset = source.summary();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& r = runs[k];
    const std::string strategy{to_string(r.strategy)}, target{to_string(r.data.target)};
    if (!results[k].error.empty()) {
      report.failures.push_back({target, r.data.concentration, strategy, r.seed, results[k].error});
      continue;
    }
    for (const auto& pt : results[k].curve)
      report.learning_curves.push_back(
          {strategy, target, r.data.concentration, r.seed, pt.round, pt.n_labeled, pt.full_rmse, pt.full_accuracy});
  }
  return report;
}

namespace detail {

inline std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  double sum = 0;
  for (const auto& x : v) {
    if (!x) return std::nullopt;
    sum += *x;
  }
  return sum / static_cast<double>(v.size());
}

}  // namespace detail

/// Appends unweighted means across concentrations, tagged "mean".
inline Report aggregate_concentrations(Report report) {
  auto is_mean = [](const std::string& c) { return c == kMeanConcentration; };
  for (const auto& r : report.training_curves)
    if (is_mean(r.concentration)) throw ConfigError("report already aggregated");
  for (const auto& r : report.cv_summary)
    if (is_mean(r.concentration)) throw ConfigError("report already aggregated");
  for (const auto& r : report.learning_curves)
    if (is_mean(r.concentration)) throw ConfigError("report already aggregated");

  {
    using Key = std::tuple<std::string, std::string, std::uint64_t, std::size_t, int, std::size_t>;
    std::map<Key, std::vector<const TrainingCurveRow*>> groups;
    for (const auto& r : report.training_curves)
      groups[{r.target, r.model, r.seed, r.fold, static_cast<int>(r.stage), r.epoch}].push_back(&r);
    std::vector<TrainingCurveRow> extra;
    for (const auto& [key, rows] : groups) {
      TrainingCurveRow m = *rows.front();
      m.concentration = kMeanConcentration;
      std::vector<std::optional<double>> tl, ta, tel, tea, tp, tep;
      for (const auto* r : rows) {
        tl.push_back(r->train_loss);
        ta.push_back(r->train_accuracy);
        tel.push_back(r->test_loss);
        tea.push_back(r->test_accuracy);
        tp.push_back(r->train_penalized);
        tep.push_back(r->test_penalized);
      }
      m.train_loss = *detail::mean_of(tl);
      m.train_accuracy = *detail::mean_of(ta);
      m.test_loss = detail::mean_of(tel);
      m.test_accuracy = detail::mean_of(tea);
      m.train_penalized = detail::mean_of(tp);
      m.test_penalized = detail::mean_of(tep);
      extra.push_back(std::move(m));
    }
    report.training_curves.insert(report.training_curves.end(), extra.begin(), extra.end());
  }
  {
    using Key = std::tuple<std::string, std::string, std::uint64_t>;
    std::map<Key, std::vector<const CvSummaryRow*>> groups;
    for (const auto& r : report.cv_summary) groups[{r.target, r.model, r.seed}].push_back(&r);
    std::vector<CvSummaryRow> extra;
    for (const auto& [key, rows] : groups) {
      CvSummaryRow m = *rows.front();
      m.concentration = kMeanConcentration;
      m.mean_test_loss = m.mean_test_accuracy = 0;
      for (const auto* r : rows) {
        m.mean_test_loss += r->mean_test_loss;
        m.mean_test_accuracy += r->mean_test_accuracy;
      }
      m.mean_test_loss /= static_cast<double>(rows.size());
      m.mean_test_accuracy /= static_cast<double>(rows.size());
      extra.push_back(m);
    }
    report.cv_summary.insert(report.cv_summary.end(), extra.begin(), extra.end());
  }
  {
    using Key = std::tuple<std::string, std::string, std::uint64_t, std::size_t>;
    std::map<Key, std::vector<const LearningCurveRow*>> groups;
    for (const auto& r : report.learning_curves) groups[{r.strategy, r.target, r.seed, r.round}].push_back(&r);
    std::vector<LearningCurveRow> extra;
    for (const auto& [key, rows] : groups) {
      LearningCurveRow m = *rows.front();
      m.concentration = kMeanConcentration;
      m.full_rmse = m.full_accuracy = 0;
      for (const auto* r : rows) {
        m.full_rmse += r->full_rmse;
        m.full_accuracy += r->full_accuracy;
      }
      m.full_rmse /= static_cast<double>(rows.size());
      m.full_accuracy /= static_cast<double>(rows.size());
      extra.push_back(m);
    }
    report.learning_curves.insert(report.learning_curves.end(), extra.begin(), extra.end());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string num(double v) { return fmt::format("{:.10g}", v); }
inline std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace detail

inline void write_training_curves(std::ostream& os, const std::vector<TrainingCurveRow>& rows) {
  os << "target,concentration,model,seed,fold,stage,epoch,train_loss,test_loss,train_accuracy,test_accuracy,"
        "train_penalized_loss,test_penalized_loss\n";
  for (const auto& r : rows)
    os << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.target, detail::csv_field(r.concentration),
                      r.model, r.seed, r.fold, to_string(r.stage), r.epoch, detail::num(r.train_loss),
                      detail::num(r.test_loss), detail::num(r.train_accuracy), detail::num(r.test_accuracy),
                      detail::num(r.train_penalized), detail::num(r.test_penalized));
}

inline void write_cv_summary(std::ostream& os, const std::vector<CvSummaryRow>& rows) {
  os << "target,concentration,model,seed,folds,mean_test_loss,mean_test_accuracy\n";
  for (const auto& r : rows)
    os << fmt::format("{},{},{},{},{},{},{}\n", r.target, detail::csv_field(r.concentration), r.model, r.seed,
                      r.folds, detail::num(r.mean_test_loss), detail::num(r.mean_test_accuracy));
}

inline void write_learning_curves(std::ostream& os, const std::vector<LearningCurveRow>& rows) {
  os << "strategy,target,concentration,seed,round,n_labeled,full_rmse,full_accuracy\n";
  for (const auto& r : rows)
    os << fmt::format("{},{},{},{},{},{},{},{}\n", r.strategy, r.target, detail::csv_field(r.concentration),
                      r.seed, r.round, r.n_labeled, detail::num(r.full_rmse), detail::num(r.full_accuracy));
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json manifest(const ExperimentConfig& cfg, const Report& report, std::string_view command) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = to_json(cfg);
  j["config_hash"] = config_hash(cfg);
  j["seeds"] = cfg.seeds;
  j["timestamp"] = utc_timestamp();
  j["rows"] = {{"training_curves", report.training_curves.size()},
               {"cv_summary", report.cv_summary.size()},
               {"learning_curves", report.learning_curves.size()}};
  auto& failures = j["failures"] = nlohmann::json::array();
  for (const auto& f : report.failures)
    failures.push_back({{"target", f.target},
                        {"concentration", f.concentration},
                        {"run", f.label},
                        {"seed", f.seed},
                        {"error", f.message}});
  if (report.dataset) {
    const auto& d = *report.dataset;
    std::vector<std::string> kept;
    for (const auto& c : d.concentrations_kept) kept.push_back(c.key);
    j["dataset"] = {{"n_cells", d.n_cells},
                    {"n_molecules", d.n_molecules},
                    {"concentrations_kept", kept},
                    {"n_instances_total", d.n_instances_total},
                    {"n_instances_kept", d.n_instances_kept}};
  }
  return j;
}

/// Writes the three CSV files and manifest.json into `dir`.
inline void write_report(const std::filesystem::path& dir, const ExperimentConfig& cfg, const Report& report,
                         std::string_view command) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw ConfigError(fmt::format("cannot write '{}'", (dir / name).string()));
    return os;
  };
  {
    auto os = open("training_curves.csv");
    write_training_curves(os, report.training_curves);
  }
  {
    auto os = open("cv_summary.csv");
    write_cv_summary(os, report.cv_summary);
  }
  {
    auto os = open("learning_curves.csv");
    write_learning_curves(os, report.learning_curves);
  }
  auto os = open("manifest.json");
  os << manifest(cfg, report, command).dump(2) << '\n';
}

}  // namespace elmal
