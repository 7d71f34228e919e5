// inset: command-line front end for data generation, training, evaluation,
// invariance checks and the synthetic benchmark table.
//
// Exit status: 0 success, 1 invariance check failed, 2 usage or configuration
// error, 3 numerical failure during training.

#include "inset/checkpoint.hpp"
#include "inset/config.hpp"
#include "inset/datasets.hpp"
#include "inset/experiment.hpp"
#include "inset/invariance.hpp"
#include "inset/metrics.hpp"
#include "inset/predict.hpp"
#include "inset/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace inset;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flags shared by the commands that build an ExperimentConfig.
struct CommonFlags {
  std::string config;
  std::string data;
  std::optional<std::string> kind;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> ground_size;
  std::optional<std::size_t> subset_size;
  std::optional<double> noise_var;
  std::optional<std::string> variant;
  std::optional<std::size_t> h, h_d;
  std::optional<std::string> mode;
  std::optional<double> lr, wd;
  std::optional<std::size_t> batch_size, mc_samples, mfvi_steps, patience, max_epochs;
  std::optional<std::string> y0;
  std::optional<std::size_t> fixed_n;
  std::optional<std::string> out_dir;

  void add_dataset(CLI::App* app) {
    app->add_option("--config", config, "JSON experiment config (flags override it)")->check(CLI::ExistingFile);
    app->add_option("--data", data, "dataset file; otherwise the synthetic dataset is generated");
    app->add_option("--kind", kind, "synthetic dataset: gaussian-mixture | two-moons");
    app->add_option("--data-seed", data_seed, "seed of the synthetic dataset and its split");
    app->add_option("--samples", samples, "number of synthetic ground sets");
    app->add_option("--ground-size", ground_size, "elements per synthetic ground set");
    app->add_option("--subset-size", subset_size, "optimal subset size of synthetic data");
    app->add_option("--noise-var", noise_var, "two-moons noise variance");
  }
  void add_model(CLI::App* app) {
    app->add_option("--variant", variant, "inset | deepsets");
    app->add_option("--embed-dim", h, "embedding width h");
    app->add_option("--hidden-dim", h_d, "head hidden width h_d");
  }
  void add_training(CLI::App* app) {
    app->add_option("--mode", mode, "exact | variational | direct");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--weight-decay", wd, "decoupled weight decay");
    app->add_option("--batch-size", batch_size, "samples per optimizer step");
    app->add_option("--patience", patience, "early-stopping patience in epochs");
    app->add_option("--max-epochs", max_epochs, "epoch limit");
  }
  void add_inference(CLI::App* app) {
    app->add_option("--mc-samples", mc_samples, "MC samples m per marginal-gain estimate");
    app->add_option("--mfvi-steps", mfvi_steps, "mean-field iterations K");
    app->add_option("--y0", y0, "mean-field start: equinet | uniform");
    app->add_option("--fixed-n", fixed_n, "TopN uses this N instead of each sample's |S*|");
  }
  void add_output(CLI::App* app) {
    app->add_option("--out-dir", out_dir, std::string("output directory (default $") + kOutputDirEnv + " or .)");
  }

  ExperimentConfig build() const {
    ExperimentConfig cfg = load_config(config);
    if (!data.empty()) cfg.dataset_path = data;
    if (kind) cfg.synth.kind = parse_dataset_kind(*kind);
    if (data_seed) cfg.synth.seed = *data_seed;
    if (samples) cfg.synth.samples_total = *samples;
    if (ground_size) cfg.synth.ground_size = *ground_size;
    if (subset_size) cfg.synth.subset_size = *subset_size;
    if (noise_var) cfg.synth.noise_variance = *noise_var;
    if (variant) cfg.variant = parse_variant(*variant);
    if (h) cfg.h = *h;
    if (h_d) cfg.h_d = *h_d;
    if (mode) cfg.train.loss.mode = parse_mode(*mode);
    if (lr) cfg.train.adam.lr = *lr;
    if (wd) cfg.train.adam.weight_decay = *wd;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (mc_samples) cfg.train.loss.mc_samples = *mc_samples;
    if (mfvi_steps) cfg.train.loss.mfvi_steps = *mfvi_steps;
    if (patience) cfg.train.patience = *patience;
    if (max_epochs) cfg.train.max_epochs = *max_epochs;
    if (y0) {
      if (*y0 != "equinet" && *y0 != "uniform") throw UsageError("--y0 must be equinet or uniform");
      cfg.train.loss.init_from_equinet = *y0 == "equinet";
    }
    if (fixed_n) cfg.train.n_out.fixed = *fixed_n;
    if (out_dir) cfg.output_dir = *out_dir;
    cfg.validate();
    return cfg;
  }
};

std::string kv_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

fs::path prepare_out_dir(const ExperimentConfig& cfg) {
  fs::path dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os.flush()) throw ConfigError("write to '" + path.string() + "' failed");
}

const std::vector<SetSample>& pick_split(const Splits& sp, const Dataset& ds, const std::string& which,
                                         std::vector<SetSample>& all) {
  if (which == "train") return sp.train;
  if (which == "validation") return sp.validation;
  if (which == "test") return sp.test;
  all = ds.samples;
  return all;
}

void check_model_fits(const InsetParams& p, const Dataset& ds) {
  if (p.dims.d != ds.header.d)
    throw ConfigError("checkpoint expects feature width d=" + std::to_string(p.dims.d) +
                      " but the dataset has d=" + std::to_string(ds.header.d));
}

// ---- gen-data ----

int cmd_gen_data(const std::string& kind, std::uint64_t seed, const std::string& out, const CommonFlags& f,
                 bool text) {
  SynthConfig sc;
  sc.kind = parse_dataset_kind(kind);
  sc.seed = seed;
  if (f.samples) sc.samples_total = *f.samples;
  if (f.ground_size) sc.ground_size = *f.ground_size;
  if (f.subset_size) sc.subset_size = *f.subset_size;
  if (f.noise_var) sc.noise_variance = *f.noise_var;
  sc.validate();
  const Dataset ds = make_dataset(sc, generate(sc));
  if (text) {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw ConfigError("cannot open '" + out + "' for writing");
    write_dataset_text(os, ds);
  } else {
    write_dataset(out, ds);
  }
  std::cout << "event=gen-data kind=" << to_string(sc.kind) << " count=" << ds.header.count
            << " d=" << ds.header.d << " n=" << sc.ground_size << " subset_size=" << sc.subset_size
            << " noise_var=" << kv_double(ds.header.noise_variance) << " seed=" << seed << " out=" << out
            << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainFlags {
  std::uint64_t seed = 0;
  std::string resume;
  bool zero_init = false;
};

int cmd_train(const CommonFlags& f, const TrainFlags& tf) {
  const ExperimentConfig cfg = f.build();
  const Dataset ds = load_dataset(cfg);
  const Splits sp = split_dataset(cfg, ds);
  const TrainConfig tc = cfg.training_for(tf.seed);
  if (tc.loss.mode == TrainMode::Exact)
    for (const auto& s : ds.samples) check_enumerable(s.n());
  const fs::path dir = prepare_out_dir(cfg);

  InsetParams params;
  std::optional<TrainProgress> progress;
  if (!tf.resume.empty()) {
    Checkpoint ck = load_checkpoint(tf.resume);
    check_model_fits(ck.params, ds);
    if (ck.mode != tc.loss.mode)
      throw ConfigError("checkpoint was trained in " + to_string(ck.mode) + " mode, not " +
                        to_string(tc.loss.mode));
    if (!ck.progress) throw ConfigError("checkpoint '" + tf.resume + "' has no training progress to resume");
    params = std::move(ck.params);
    progress = std::move(ck.progress);
  } else {
    const ModelDims dims{ds.header.d, cfg.h, cfg.h_d};
    Rng rng = make_rng(tf.seed, Stream::Init);
    params = tf.zero_init ? InsetParams::zeros(dims, cfg.variant) : InsetParams::init(dims, cfg.variant, rng);
  }
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  std::cout << "event=start task=" << task_label(ds) << " method=" << method_label(params.variant, tc.loss.mode)
            << " seed=" << tf.seed << " train=" << sp.train.size() << " validation=" << sp.validation.size()
            << " test=" << sp.test.size() << " parameters=" << params.parameter_count() << "\n";

  const auto on_epoch = [&](const EpochLog& log, const Checkpoint& ck) {
    std::cout << "event=epoch epoch=" << log.epoch << " train_loss=" << kv_double(log.train_loss)
              << " val_mjc=" << kv_double(log.val_mjc) << " improved=" << (log.improved ? 1 : 0) << std::endl;
    save_checkpoint((dir / "last.ckpt").string(), ck);
    if (log.improved) save_checkpoint((dir / "best.ckpt").string(), Checkpoint{ck.params, ck.mode, std::nullopt});
  };
  try {
    const TrainResult res = train(std::move(params), sp.train, sp.validation, tc, std::move(progress), on_epoch);
    save_checkpoint((dir / "best.ckpt").string(), Checkpoint{res.best, tc.loss.mode, std::nullopt});
    const double test = evaluate_model(res.best, tc.loss.mode, sp.test, tc.n_out, tc.inference).mean;
    std::cout << "event=done best_epoch=" << res.best_epoch << " best_val_mjc=" << kv_double(res.best_val)
              << " test_mjc=" << kv_double(test) << " epochs_run=" << res.epochs_run
              << " checkpoint=" << (dir / "best.ckpt").string() << "\n";
  } catch (const NumericalError& e) {
    std::cout << "event=diverged epoch=" << e.epoch() << " reason=\"" << e.what() << "\"\n";
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const CommonFlags& f, const std::string& ckpt_path, const std::string& which, std::uint64_t seed) {
  if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path);
  const ExperimentConfig cfg = f.build();
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Dataset ds = load_dataset(cfg);
  check_model_fits(ck.params, ds);
  const Splits sp = split_dataset(cfg, ds);
  std::vector<SetSample> all;
  const auto& samples = pick_split(sp, ds, which, all);
  const TrainConfig tc = cfg.training_for(seed);
  MetricsReport rep = evaluate_model(ck.params, ck.mode, samples, tc.n_out, tc.inference);
  rep.task = task_label(ds);
  rep.method = method_label(ck.params.variant, ck.mode);
  rep.runs.front().seed = seed;
  rep.aggregate();
  const fs::path dir = prepare_out_dir(cfg);
  std::ostringstream csv, table;
  write_metrics_csv(csv, {rep});
  write_table(table, {rep});
  write_text(dir / "metrics.csv", csv.str());
  write_text(dir / "table.txt", table.str());
  std::cout << "event=eval task=" << rep.task << " method=" << rep.method << " split=" << which
            << " samples=" << samples.size() << " n_out_rule=" << rep.n_out_rule << " mjc=" << kv_double(rep.mean)
            << "\n";
  return kExitOk;
}

// ---- invariance ----

int cmd_invariance(const CommonFlags& f, const std::string& ckpt_path, std::size_t trials, double tolerance,
                   std::uint64_t seed) {
  if (trials == 0) throw UsageError("--trials must be >= 1");
  const ExperimentConfig cfg = f.build();
  const Dataset ds = load_dataset(cfg);
  InsetParams params;
  if (!ckpt_path.empty()) {
    if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path);
    params = load_checkpoint(ckpt_path).params;
    check_model_fits(params, ds);
  } else {
    Rng rng = make_rng(seed, Stream::Init);
    params = InsetParams::init(ModelDims{ds.header.d, cfg.h, cfg.h_d}, cfg.variant, rng);
  }
  Rng rng = make_rng(seed, Stream::Eval);
  const InvarianceReport rep = invariance_suite(params, ds.samples, trials, tolerance, rng);
  std::ostringstream os;
  write_report(os, rep);
  std::cout << "event=invariance " << os.str();
  write_text(prepare_out_dir(cfg) / "invariance.txt", os.str());
  return rep.passed ? kExitOk : kExitCheckFailed;
}

// ---- bench ----

int cmd_bench(const CommonFlags& f, std::size_t jobs, std::size_t n_seeds) {
  if (n_seeds == 0) throw UsageError("--seeds must be >= 1");
  ExperimentConfig base = f.build();
  base.seeds.clear();
  for (std::size_t s = 0; s < n_seeds; ++s) base.seeds.push_back(s);
  const fs::path dir = prepare_out_dir(base);
  const auto t0 = std::chrono::steady_clock::now();

  BenchOptions opt;
  opt.jobs = jobs;
  opt.on_epoch = [](const std::string& task, const std::string& method, const SeedLog& l) {
    std::cout << "event=epoch task=" << task << " method=" << method << " seed=" << l.seed
              << " epoch=" << l.epoch.epoch << " train_loss=" << kv_double(l.epoch.train_loss)
              << " val_mjc=" << kv_double(l.epoch.val_mjc) << std::endl;
  };
  opt.on_cell = [](const MetricsReport& rep) {
    for (const auto& r : rep.runs)
      std::cout << "event=seed task=" << rep.task << " method=" << rep.method << " seed=" << r.seed
                << " status=\"" << r.status << "\" test_mjc=" << kv_double(r.mjc) << " epochs=" << r.epochs
                << " wall_s=" << kv_double(r.wall_seconds) << std::endl;
  };
  const std::vector<MetricsReport> ordered = run_bench(base, opt);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream csv, timing, table;
  write_metrics_csv(csv, ordered);
  write_timing_csv(timing, ordered);
  write_table(table, ordered);
  timing << "total,,," << std::fixed << std::setprecision(3) << total << "\n";
  write_text(dir / "bench_metrics.csv", csv.str());
  write_text(dir / "bench_timing.csv", timing.str());
  write_text(dir / "bench_table.txt", table.str());
  std::cout << table.str();
  std::cout << "event=bench-done wall_s=" << kv_double(total) << " out_dir=" << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"INSET neural subset selection: data generation, training, evaluation and checks"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, inv_flags, bench_flags;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  std::string gen_kind = "gaussian-mixture", gen_out;
  std::uint64_t gen_seed = 0;
  bool gen_text = false;
  gen->add_option("--kind", gen_kind, "gaussian-mixture | two-moons")->capture_default_str();
  gen->add_option("--seed", gen_seed, "data seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output file")->required();
  gen->add_option("--samples", gen_flags.samples, "number of ground sets");
  gen->add_option("--ground-size", gen_flags.ground_size, "elements per ground set");
  gen->add_option("--subset-size", gen_flags.subset_size, "optimal subset size");
  gen->add_option("--noise-var", gen_flags.noise_var, "two-moons noise variance");
  gen->add_flag("--text", gen_text, "write the line-oriented text form instead of binary");

  auto* tr = app.add_subcommand("train", "train one model with early stopping");
  TrainFlags tflags;
  train_flags.add_dataset(tr);
  train_flags.add_model(tr);
  train_flags.add_training(tr);
  train_flags.add_inference(tr);
  train_flags.add_output(tr);
  tr->add_option("--seed", tflags.seed, "seed for init, sampling and batching")->capture_default_str();
  tr->add_option("--resume", tflags.resume, "continue from a last.ckpt")->check(CLI::ExistingFile);
  tr->add_flag("--zero-init", tflags.zero_init, "start from all-zero parameters");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (MJC)");
  std::string ev_ckpt, ev_split = "test";
  std::uint64_t ev_seed = 0;
  eval_flags.add_dataset(ev);
  eval_flags.add_inference(ev);
  eval_flags.add_output(ev);
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--split", ev_split, "train | validation | test | all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  ev->add_option("--seed", ev_seed, "seed for inference sampling")->capture_default_str();

  auto* inv = app.add_subcommand("invariance", "permutation invariance and equivariance suite");
  std::string inv_ckpt;
  std::size_t inv_trials = 100;
  double inv_tol = 0.0;
  std::uint64_t inv_seed = 0;
  inv_flags.add_dataset(inv);
  inv_flags.add_model(inv);
  inv_flags.add_output(inv);
  inv->add_option("--checkpoint", inv_ckpt, "checkpoint file (default: freshly initialized model)");
  inv->add_option("--trials", inv_trials, "random permutation trials")->capture_default_str();
  inv->add_option("--tolerance", inv_tol, "allowed absolute deviation")->capture_default_str();
  inv->add_option("--seed", inv_seed, "seed for model init and trials")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "MJC table over both synthetic tasks and all methods");
  std::size_t bench_jobs = 1, bench_seeds = 5;
  bench_flags.add_output(bench);
  bench->add_option("--config", bench_flags.config, "JSON config with shared settings")->check(CLI::ExistingFile);
  bench->add_option("--jobs", bench_jobs, "seed runs executed concurrently")->capture_default_str();
  bench->add_option("--seeds", bench_seeds, "seeds per cell")->capture_default_str();
  bench->add_option("--samples", bench_flags.samples, "ground sets per task");
  bench->add_option("--max-epochs", bench_flags.max_epochs, "epoch limit");
  bench->add_option("--data-seed", bench_flags.data_seed, "seed of both synthetic datasets");
  bench->add_option("--ground-size", bench_flags.ground_size, "elements per ground set");
  bench->add_option("--subset-size", bench_flags.subset_size, "optimal subset size");
  bench->add_option("--embed-dim", bench_flags.h, "embedding width h");
  bench->add_option("--hidden-dim", bench_flags.h_d, "head hidden width h_d");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_kind, gen_seed, gen_out, gen_flags, gen_text);
    if (*tr) return cmd_train(train_flags, tflags);
    if (*ev) return cmd_eval(eval_flags, ev_ckpt, ev_split, ev_seed);
    if (*inv) return cmd_invariance(inv_flags, inv_ckpt, inv_trials, inv_tol, inv_seed);
    if (*bench) return cmd_bench(bench_flags, bench_jobs, bench_seeds);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
