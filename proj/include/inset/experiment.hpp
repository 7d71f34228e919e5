#pragma once

#include "inset/checkpoint.hpp"
#include "inset/config.hpp"
#include "inset/datasets.hpp"
#include "inset/metrics.hpp"
#include "inset/predict.hpp"
#include "inset/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace inset {

/// Loads or generates the samples named by the dataset section.
inline Dataset load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) return read_dataset_file(cfg.dataset_path);
  return make_dataset(cfg.synth, generate(cfg.synth));
}

inline Splits split_dataset(const ExperimentConfig& cfg, const Dataset& ds) {
  return split(ds.samples, cfg.split_ratios, ds.header.seed);
}

inline std::string task_label(const Dataset& ds) { return to_string(ds.header.kind); }

inline std::string method_label(ModelVariant v, TrainMode m) {
  return to_string(v) + "-" + to_string(m);
}

/// One line of progress from a seed run.
struct SeedLog {
  std::uint64_t seed = 0;
  EpochLog epoch;
};

struct RunOptions {
  std::size_t jobs = 1;
  std::function<void(const SeedLog&)> on_epoch;  // may be called from worker threads, serialized
  /// Called with the best parameters of every successful seed.
  std::function<void(std::uint64_t, const Checkpoint&)> on_best;
};

/// Runs `task(k)` for k in [0, count) on up to `jobs` threads.
template <class Task>
void run_indexed(std::size_t count, std::size_t jobs, Task&& task) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    for (std::size_t k = 0; k < count; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) task(k);
    });
  for (auto& t : pool) t.join();
}

/// Trains one seed with early stopping, restores the best-validation
/// parameters and evaluates them on the test split.
inline SeedResult run_seed(const ExperimentConfig& cfg, const Splits& sp, std::size_t d,
                           std::uint64_t seed, const RunOptions& opt, std::mutex& log_mu) {
  const auto t0 = std::chrono::steady_clock::now();
  SeedResult res;
  res.seed = seed;
  const TrainConfig tc = cfg.training_for(seed);
  try {
    Rng init_rng = make_rng(seed, Stream::Init);
    InsetParams p = InsetParams::init(ModelDims{d, cfg.h, cfg.h_d}, cfg.variant, init_rng);
    EpochCallback cb;
    if (opt.on_epoch)
      cb = [&](const EpochLog& log, const Checkpoint&) {
        std::lock_guard lock(log_mu);
        opt.on_epoch(SeedLog{seed, log});
      };
    TrainResult tr = train(std::move(p), sp.train, sp.validation, tc, std::nullopt, cb);
    res.epochs = tr.epochs_run;
    res.mjc = evaluate_model(tr.best, tc.loss.mode, sp.test, tc.n_out, tc.inference).mean;
    if (opt.on_best) {
      std::lock_guard lock(log_mu);
      opt.on_best(seed, Checkpoint{tr.best, tc.loss.mode, std::nullopt});
    }
  } catch (const NumericalError& e) {
    res.status = "diverged at epoch " + std::to_string(e.epoch());
    res.epochs = e.epoch();
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Multi-seed run of one (variant, mode) on one dataset. Seeds may run
/// concurrently; the report lists them sorted by seed.
inline MetricsReport run_experiment(const ExperimentConfig& cfg, const Dataset& ds,
                                    const RunOptions& opt = {}) {
  cfg.validate();
  if (ds.samples.empty()) throw std::invalid_argument("run_experiment: empty dataset");
  const Splits sp = split_dataset(cfg, ds);
  if (cfg.train.loss.mode == TrainMode::Exact)
    for (const auto& s : ds.samples) check_enumerable(s.n());

  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  MetricsReport rep;
  rep.task = task_label(ds);
  rep.method = method_label(cfg.variant, cfg.train.loss.mode);
  rep.n_out_rule = cfg.train.n_out.describe();
  rep.runs.resize(seeds.size());
  std::mutex log_mu;
  run_indexed(seeds.size(), opt.jobs, [&](std::size_t k) {
    rep.runs[k] = run_seed(cfg, sp, ds.header.d, seeds[k], opt, log_mu);
  });
  rep.aggregate();
  return rep;
}

inline MetricsReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  return run_experiment(cfg, load_dataset(cfg), opt);
}

/// Uniformly random predictor on the test split, one run per seed.
inline MetricsReport run_random_baseline(const ExperimentConfig& cfg, const Dataset& ds) {
  const Splits sp = split_dataset(cfg, ds);
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  MetricsReport rep;
  rep.task = task_label(ds);
  rep.method = "random";
  rep.n_out_rule = cfg.train.n_out.describe();
  for (std::uint64_t seed : seeds) {
    SeedResult r;
    r.seed = seed;
    r.mjc = evaluate_random(sp.test, seed, cfg.train.n_out).mean;
    rep.runs.push_back(r);
  }
  rep.aggregate();
  return rep;
}

struct BenchOptions {
  std::size_t jobs = 1;
  /// Per-epoch progress of a trained cell, tagged with task and method.
  std::function<void(const std::string&, const std::string&, const SeedLog&)> on_epoch;
  /// Called once per finished cell, random baseline included.
  std::function<void(const MetricsReport&)> on_cell;
};

/// The synthetic comparison table: random, deepsets-direct and inset-variational
/// on two-moons and gaussian-mixture, returned in row order (method, then task).
/// `base` supplies everything except the dataset kind, variant and mode.
inline std::vector<MetricsReport> run_bench(const ExperimentConfig& base, const BenchOptions& opt = {}) {
  struct Cell {
    ModelVariant variant;
    TrainMode mode;
  };
  std::vector<MetricsReport> reps;
  for (DatasetKind kind : {DatasetKind::TwoMoons, DatasetKind::GaussianMixture}) {
    ExperimentConfig cfg = base;
    cfg.dataset_path.clear();
    cfg.synth.kind = kind;
    const Dataset ds = load_dataset(cfg);
    reps.push_back(run_random_baseline(cfg, ds));
    if (opt.on_cell) opt.on_cell(reps.back());
    for (const Cell& c : {Cell{ModelVariant::DeepSetsOnly, TrainMode::Direct},
                          Cell{ModelVariant::Inset, TrainMode::Variational}}) {
      cfg.variant = c.variant;
      cfg.train.loss.mode = c.mode;
      RunOptions ro;
      ro.jobs = opt.jobs;
      const std::string task = task_label(ds), method = method_label(c.variant, c.mode);
      if (opt.on_epoch) ro.on_epoch = [&](const SeedLog& l) { opt.on_epoch(task, method, l); };
      reps.push_back(run_experiment(cfg, ds, ro));
      if (opt.on_cell) opt.on_cell(reps.back());
    }
  }
  std::vector<MetricsReport> ordered;
  for (const char* m : {"random", "deepsets-direct", "inset-variational"})
    for (const auto& r : reps)
      if (r.method == m) ordered.push_back(r);
  return ordered;
}

}  // namespace inset
