// Command line front end for the benchmark and active-learning studies.
//
//   elmal benchmark --synthetic 35,34,5,0.1 --target gr --out runs/bench
//   elmal al-study  --dataset data.csv --strategy elm,random --seeds 0,1 --out runs/al

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "elmal/elmal.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Overrides {
  std::string config_file;
  std::string dataset;
  std::string synthetic;
  std::string target;
  std::vector<std::string> strategies;
  std::vector<std::string> models;
  std::vector<std::string> concentrations;
  std::vector<std::uint64_t> seeds;
  std::string out;
  int threads = -1;
  int folds = -1;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "JSON experiment config; flags override it")->check(CLI::ExistingFile);
  auto* ds = cmd->add_option("--dataset", o.dataset, "drug-sensitivity CSV");
  auto* syn = cmd->add_option("--synthetic", o.synthetic, "synthetic data: m,n,rank,noise_sd");
  ds->excludes(syn);
  cmd->add_option("--target", o.target, "gr, ifd or both")->check(CLI::IsMember({"gr", "ifd", "both"}));
  cmd->add_option("--concentrations", o.concentrations, "concentrations to keep (default: all common)")
      ->delimiter(',');
  cmd->add_option("--seeds", o.seeds, "run seeds")->delimiter(',');
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

elmal::ExperimentConfig resolve(const Overrides& o) {
  elmal::ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    cfg = elmal::config_from_json(nlohmann::json::parse(in));
  }
  if (!o.dataset.empty()) {
    cfg.dataset_path = o.dataset;
    cfg.synthetic.reset();
  }
  if (!o.synthetic.empty()) {
    const auto parts = split_list(o.synthetic);
    if (parts.size() != 4) throw elmal::ConfigError("--synthetic expects m,n,rank,noise_sd");
    elmal::SyntheticParams s = cfg.synthetic.value_or(elmal::SyntheticParams{});
    s.m = std::stoul(parts[0]);
    s.n = std::stoul(parts[1]);
    s.rank = std::stoul(parts[2]);
    s.noise_sd = std::stod(parts[3]);
    cfg.synthetic = s;
    cfg.dataset_path.reset();
  }
  if (o.target == "gr") cfg.targets = {elmal::Target::GR};
  if (o.target == "ifd") cfg.targets = {elmal::Target::IFD};
  if (o.target == "both") cfg.targets = {elmal::Target::GR, elmal::Target::IFD};
  if (!o.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : o.strategies) cfg.strategies.push_back(elmal::parse_strategy(s));
  }
  if (!o.models.empty()) {
    cfg.models.clear();
    for (const auto& m : o.models) cfg.models.push_back(elmal::parse_model(m));
  }
  if (!o.concentrations.empty()) cfg.concentrations = o.concentrations;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.threads >= 0) cfg.threads = static_cast<std::size_t>(o.threads);
  if (o.folds >= 0) cfg.folds = static_cast<std::size_t>(o.folds);
  return cfg;
}

void print_failures(const elmal::Report& r) {
  for (const auto& f : r.failures)
    fmt::print(stderr, "skipped {} {} conc={} seed={}: {}\n", f.label, f.target, f.concentration, f.seed, f.message);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-completion active learning: model benchmarks and query-strategy studies"};
  app.require_subcommand(1);

  Overrides bench_opts, al_opts;
  auto* bench = app.add_subcommand("benchmark", "k-fold cross-validation of ALS and ALSDL");
  add_common(bench, bench_opts);
  bench->add_option("--model", bench_opts.models, "models: als, alsdl")->delimiter(',');
  bench->add_option("--folds", bench_opts.folds, "number of folds");

  auto* al = app.add_subcommand("al-study", "active-learning strategy comparison");
  add_common(al, al_opts);
  al->add_option("--strategy", al_opts.strategies, "orderly, random, uncertainty, elm")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    const bool is_bench = bench->parsed();
    const auto cfg = resolve(is_bench ? bench_opts : al_opts);
    const std::string command = is_bench ? "benchmark" : "al-study";
    auto report = is_bench ? elmal::run_benchmark(cfg) : elmal::run_al_study(cfg);
    report = elmal::aggregate_concentrations(std::move(report));
    elmal::write_report(cfg.output_dir, cfg, report, command);
    print_failures(report);
    fmt::print("{}: wrote {} training-curve, {} cv-summary, {} learning-curve rows to {}\n", command,
               report.training_curves.size(), report.cv_summary.size(), report.learning_curves.size(),
               cfg.output_dir);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
