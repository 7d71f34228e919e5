#include "inset/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace inset;
using nlohmann::json;

namespace {

ExperimentConfig applied(const std::string& text) {
  ExperimentConfig cfg;
  apply_json(cfg, json::parse(text));
  return cfg;
}

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream(path) << text;
  return path;
}

class EnvGuard {
 public:
  explicit EnvGuard(const char* value) {
    if (const char* old = std::getenv(kOutputDirEnv)) old_ = old;
    if (value) ::setenv(kOutputDirEnv, value, 1);
    else ::unsetenv(kOutputDirEnv);
  }
  ~EnvGuard() {
    if (old_) ::setenv(kOutputDirEnv, old_->c_str(), 1);
    else ::unsetenv(kOutputDirEnv);
  }

 private:
  std::optional<std::string> old_;
};

}  // namespace

TEST(Config, DefaultsAreValid) {
  const ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.train.adam.lr, 1e-4);
  EXPECT_EQ(cfg.train.adam.weight_decay, 1e-5);
  EXPECT_EQ(cfg.train.loss.mc_samples, 5u);
  EXPECT_EQ(cfg.train.batch_size, 32u);
  EXPECT_EQ(cfg.train.patience, 6u);
  EXPECT_EQ(cfg.train.max_epochs, 100u);
  EXPECT_EQ(cfg.seeds.size(), 5u);
  EXPECT_EQ(cfg.synth.samples_total, 1000u);
  EXPECT_EQ(cfg.synth.noise_variance, 0.1);
}

TEST(Config, ParsesEverySection) {
  const ExperimentConfig cfg = applied(R"({
    "dataset": {"kind": "two-moons", "samples_total": 200, "ground_size": 30, "subset_size": 5,
                "noise_variance": 0.2, "split": [0.6, 0.2, 0.2], "seed": 9},
    "model": {"variant": "deepsets", "h": 16, "h_d": 24},
    "training": {"mode": "exact", "lr": 0.001, "weight_decay": 0.0, "batch_size": 8,
                 "mc_samples": 7, "mfvi_steps": 3, "init_from_equinet": false,
                 "patience": 4, "max_epochs": 20, "seeds": [3, 1]},
    "eval": {"n_out": 10, "tolerance": 1e-9},
    "output_dir": "runs/a"
  })");
  EXPECT_EQ(cfg.synth.kind, DatasetKind::TwoMoons);
  EXPECT_EQ(cfg.synth.samples_total, 200u);
  EXPECT_EQ(cfg.synth.ground_size, 30u);
  EXPECT_EQ(cfg.synth.subset_size, 5u);
  EXPECT_EQ(cfg.synth.noise_variance, 0.2);
  EXPECT_EQ(cfg.split_ratios[0], 0.6);
  EXPECT_EQ(cfg.synth.seed, 9u);
  EXPECT_EQ(cfg.variant, ModelVariant::DeepSetsOnly);
  EXPECT_EQ(cfg.h, 16u);
  EXPECT_EQ(cfg.h_d, 24u);
  EXPECT_EQ(cfg.train.loss.mode, TrainMode::Exact);
  EXPECT_EQ(cfg.train.adam.lr, 0.001);
  EXPECT_EQ(cfg.train.batch_size, 8u);
  EXPECT_EQ(cfg.train.loss.mc_samples, 7u);
  EXPECT_EQ(cfg.train.loss.mfvi_steps, 3u);
  EXPECT_FALSE(cfg.train.loss.init_from_equinet);
  EXPECT_EQ(cfg.train.patience, 4u);
  EXPECT_EQ(cfg.train.max_epochs, 20u);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{3, 1}));
  EXPECT_EQ(cfg.train.n_out.fixed, std::optional<std::size_t>(10));
  EXPECT_EQ(cfg.tolerance, 1e-9);
  EXPECT_EQ(cfg.output_dir, "runs/a");
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, AbsentKeysKeepDefaults) {
  const ExperimentConfig cfg = applied(R"({"training": {"lr": 0.01}})");
  EXPECT_EQ(cfg.train.adam.lr, 0.01);
  EXPECT_EQ(cfg.train.adam.weight_decay, 1e-5);
  EXPECT_EQ(cfg.variant, ModelVariant::Inset);
}

TEST(Config, UnknownKeysAreNamed) {
  try {
    applied(R"({"training": {"learning_rate": 0.1}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "unknown key 'training.learning_rate'");
  }
  EXPECT_THROW(applied(R"({"extra": 1})"), ConfigError);
}

TEST(Config, WrongTypesAndValuesRejected) {
  EXPECT_THROW(applied(R"({"training": {"lr": "fast"}})"), ConfigError);
  EXPECT_THROW(applied(R"({"model": {"variant": "transformer"}})"), ConfigError);
  EXPECT_THROW(applied(R"({"training": {"mode": "sgd"}})"), ConfigError);
  EXPECT_THROW(applied(R"({"dataset": {"kind": "spirals"}})"), ConfigError);
  EXPECT_THROW(applied(R"({"eval": {"n_out": "all"}})"), ConfigError);
  EXPECT_THROW(applied(R"({"eval": {"n_out": -3}})"), ConfigError);
  EXPECT_THROW(applied(R"({"model": []})"), ConfigError);
}

TEST(Config, NegativeCountsRejectedInsteadOfWrapping) {
  try {
    applied(R"({"training": {"batch_size": -3}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "training.batch_size must be a non-negative integer");
  }
  EXPECT_THROW(applied(R"({"dataset": {"samples_total": 1.5}})"), ConfigError);
  EXPECT_THROW(applied(R"({"training": {"seeds": [1, -2]}})"), ConfigError);
}

TEST(Config, PerSampleNOutResetsFixed) {
  ExperimentConfig cfg;
  cfg.train.n_out.fixed = 4;
  apply_json(cfg, json::parse(R"({"eval": {"n_out": "per-sample"}})"));
  EXPECT_FALSE(cfg.train.n_out.fixed.has_value());
}

TEST(Config, RangeChecksNameTheKey) {
  auto message = [](const std::string& text) {
    try {
      applied(text).validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message(R"({"training": {"lr": 0}})"), "training.lr must be in (0, 1]");
  EXPECT_EQ(message(R"({"training": {"lr": 2}})"), "training.lr must be in (0, 1]");
  EXPECT_EQ(message(R"({"training": {"batch_size": 0}})"), "training.batch_size must be >= 1");
  EXPECT_EQ(message(R"({"training": {"mfvi_steps": 0}})"), "training.mfvi_steps must be in [1, 1000]");
  EXPECT_EQ(message(R"({"training": {"seeds": []}})"), "training.seeds must not be empty");
  EXPECT_EQ(message(R"({"model": {"h": 0}})"), "model.h must be in [1, 4096]");
  EXPECT_EQ(message(R"({"eval": {"tolerance": -1}})"), "eval.tolerance must be >= 0");
  EXPECT_EQ(message(R"({"eval": {"n_out": 0}})"), "eval.n_out must be >= 1");
  EXPECT_NE(message(R"({"dataset": {"subset_size": 100}})").find("dataset: subset_size"), std::string::npos);
  EXPECT_NE(message(R"({"dataset": {"path": "/no/such/file.bin"}})").find("does not exist"), std::string::npos);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig cfg = applied(R"({"model": {"h": 12}, "eval": {"n_out": 3}, "training": {"seeds": [7]}})");
  ExperimentConfig back;
  apply_json(back, to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.h, 12u);
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{7}));
}

TEST(Config, TrainingForCopiesInferenceSettings) {
  ExperimentConfig cfg;
  cfg.train.loss.mc_samples = 9;
  cfg.train.loss.mfvi_steps = 2;
  cfg.train.loss.init_from_equinet = false;
  const TrainConfig t = cfg.training_for(4);
  EXPECT_EQ(t.seed, 4u);
  EXPECT_EQ(t.inference.seed, 4u);
  EXPECT_EQ(t.inference.mc_samples, 9u);
  EXPECT_EQ(t.inference.mfvi_steps, 2u);
  EXPECT_FALSE(t.inference.init_from_equinet);
}

TEST(Config, FileOverridesEnvironmentOverridesDefault) {
  {
    EnvGuard env(nullptr);
    EXPECT_EQ(load_config().output_dir, ".");
  }
  EnvGuard env("/tmp/from-env");
  EXPECT_EQ(load_config().output_dir, "/tmp/from-env");
  const std::string without = write_temp("cfg_a.json", R"({"training": {"lr": 0.5}})");
  EXPECT_EQ(load_config(without).output_dir, "/tmp/from-env");
  EXPECT_EQ(load_config(without).train.adam.lr, 0.5);
  const std::string with = write_temp("cfg_b.json", R"({"output_dir": "from-file"})");
  EXPECT_EQ(load_config(with).output_dir, "from-file");
}

TEST(Config, FileErrors) {
  EXPECT_THROW(load_config("/no/such/config.json"), ConfigError);
  const std::string bad = write_temp("cfg_bad.json", "{ not json");
  try {
    load_config(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("not valid JSON"), std::string::npos);
  }
}
