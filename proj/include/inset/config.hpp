#pragma once

#include "inset/datasets.hpp"
#include "inset/metrics.hpp"
#include "inset/modes.hpp"
#include "inset/params.hpp"
#include "inset/trainer.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace inset {

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "INSET_OUTPUT_DIR";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Full run specification. See docs/config.md for the file schema.
struct ExperimentConfig {
  // dataset
  SynthConfig synth;
  std::string dataset_path;  // when set, samples are read from this file instead
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  // model
  ModelVariant variant = ModelVariant::Inset;
  std::size_t h = 64;
  std::size_t h_d = 128;
  // training
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  // eval
  double tolerance = 0.0;
  // output
  std::string output_dir = ".";

  /// Training settings for one seed; inference reuses the training m, K and Y0 choice.
  TrainConfig training_for(std::uint64_t seed) const {
    TrainConfig t = train;
    t.seed = seed;
    t.inference.mc_samples = t.loss.mc_samples;
    t.inference.mfvi_steps = t.loss.mfvi_steps;
    t.inference.init_from_equinet = t.loss.init_from_equinet;
    t.inference.seed = seed;
    return t;
  }

  void validate() const {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (dataset_path.empty()) {
      try {
        synth.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
      }
    } else if (!std::filesystem::exists(dataset_path)) {
      throw ConfigError("dataset.path does not exist: " + dataset_path);
    }
    for (double r : split_ratios)
      if (!in(r, 0.0, 1.0)) throw ConfigError("dataset.split ratios must lie in [0, 1]");
    if (h < 1 || h > 4096) throw ConfigError("model.h must be in [1, 4096]");
    if (h_d < 1 || h_d > 4096) throw ConfigError("model.h_d must be in [1, 4096]");
    if (!(train.adam.lr > 0.0) || train.adam.lr > 1.0) throw ConfigError("training.lr must be in (0, 1]");
    if (!in(train.adam.weight_decay, 0.0, 1.0)) throw ConfigError("training.weight_decay must be in [0, 1]");
    if (train.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (train.loss.mc_samples < 1 || train.loss.mc_samples > 100000)
      throw ConfigError("training.mc_samples must be in [1, 100000]");
    if (train.loss.mfvi_steps < 1 || train.loss.mfvi_steps > 1000)
      throw ConfigError("training.mfvi_steps must be in [1, 1000]");
    if (train.patience < 1) throw ConfigError("training.patience must be >= 1");
    if (train.max_epochs < 1 || train.max_epochs > 100000)
      throw ConfigError("training.max_epochs must be in [1, 100000]");
    if (seeds.empty()) throw ConfigError("training.seeds must not be empty");
    if (train.n_out.fixed && *train.n_out.fixed < 1) throw ConfigError("eval.n_out must be >= 1");
    if (!(tolerance >= 0.0)) throw ConfigError("eval.tolerance must be >= 0");
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& section,
                           std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(section + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key '" + (section.empty() ? "" : section + ".") + it.key() + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!obj.at(key).is_number_unsigned())
      throw ConfigError(section + "." + key + " must be a non-negative integer");
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    for (const auto& v : obj.at(key))
      if (!v.is_number_unsigned())
        throw ConfigError(section + "." + key + " must hold non-negative integers");
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + " has the wrong type");
  }
}

}  // namespace detail

/// Applies a JSON document on top of `cfg`. Keys that are absent keep their
/// current values; unknown keys are errors.
inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& doc) {
  using detail::read;
  detail::reject_unknown(doc, "", {"dataset", "model", "training", "eval", "output_dir"});
  if (doc.contains("dataset")) {
    const auto& d = doc["dataset"];
    detail::reject_unknown(d, "dataset",
                           {"kind", "path", "samples_total", "ground_size", "subset_size",
                            "noise_variance", "mu0", "mu1", "sigma", "split", "seed"});
    if (d.contains("kind")) {
      std::string kind;
      read(d, "kind", kind, "dataset");
      try {
        cfg.synth.kind = parse_dataset_kind(kind);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    read(d, "path", cfg.dataset_path, "dataset");
    read(d, "samples_total", cfg.synth.samples_total, "dataset");
    read(d, "ground_size", cfg.synth.ground_size, "dataset");
    read(d, "subset_size", cfg.synth.subset_size, "dataset");
    read(d, "noise_variance", cfg.synth.noise_variance, "dataset");
    read(d, "mu0", cfg.synth.mu0, "dataset");
    read(d, "mu1", cfg.synth.mu1, "dataset");
    read(d, "sigma", cfg.synth.sigma, "dataset");
    read(d, "split", cfg.split_ratios, "dataset");
    read(d, "seed", cfg.synth.seed, "dataset");
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    detail::reject_unknown(m, "model", {"variant", "h", "h_d"});
    if (m.contains("variant")) {
      std::string v;
      read(m, "variant", v, "model");
      try {
        cfg.variant = parse_variant(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    read(m, "h", cfg.h, "model");
    read(m, "h_d", cfg.h_d, "model");
  }
  if (doc.contains("training")) {
    const auto& t = doc["training"];
    detail::reject_unknown(t, "training",
                           {"mode", "lr", "weight_decay", "batch_size", "mc_samples", "mfvi_steps",
                            "init_from_equinet", "patience", "max_epochs", "seeds"});
    if (t.contains("mode")) {
      std::string mode;
      read(t, "mode", mode, "training");
      try {
        cfg.train.loss.mode = parse_mode(mode);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    read(t, "lr", cfg.train.adam.lr, "training");
    read(t, "weight_decay", cfg.train.adam.weight_decay, "training");
    read(t, "batch_size", cfg.train.batch_size, "training");
    read(t, "mc_samples", cfg.train.loss.mc_samples, "training");
    read(t, "mfvi_steps", cfg.train.loss.mfvi_steps, "training");
    read(t, "init_from_equinet", cfg.train.loss.init_from_equinet, "training");
    read(t, "patience", cfg.train.patience, "training");
    read(t, "max_epochs", cfg.train.max_epochs, "training");
    read(t, "seeds", cfg.seeds, "training");
  }
  if (doc.contains("eval")) {
    const auto& e = doc["eval"];
    detail::reject_unknown(e, "eval", {"n_out", "tolerance"});
    if (e.contains("n_out")) {
      const auto& n = e["n_out"];
      if (n.is_string() && n.get<std::string>() == "per-sample") {
        cfg.train.n_out.fixed.reset();
      } else if (n.is_number_unsigned()) {
        cfg.train.n_out.fixed = n.get<std::size_t>();
      } else {
        throw ConfigError("eval.n_out must be \"per-sample\" or a positive integer");
      }
    }
    read(e, "tolerance", cfg.tolerance, "eval");
  }
  read(doc, "output_dir", cfg.output_dir, "");
}

/// Defaults, then $INSET_OUTPUT_DIR, then the file (if any). Flags are applied
/// by the caller afterwards and win over all of these.
inline ExperimentConfig load_config(const std::string& path = "") {
  ExperimentConfig cfg;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') cfg.output_dir = env;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  apply_json(cfg, doc);
  return cfg;
}

/// The configuration as a JSON document accepted by apply_json.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json doc;
  auto& d = doc["dataset"];
  if (cfg.dataset_path.empty()) {
    d["kind"] = to_string(cfg.synth.kind);
    d["samples_total"] = cfg.synth.samples_total;
    d["ground_size"] = cfg.synth.ground_size;
    d["subset_size"] = cfg.synth.subset_size;
    d["noise_variance"] = cfg.synth.noise_variance;
    d["mu0"] = cfg.synth.mu0;
    d["mu1"] = cfg.synth.mu1;
    d["sigma"] = cfg.synth.sigma;
    d["seed"] = cfg.synth.seed;
  } else {
    d["path"] = cfg.dataset_path;
  }
  d["split"] = cfg.split_ratios;
  doc["model"] = {{"variant", to_string(cfg.variant)}, {"h", cfg.h}, {"h_d", cfg.h_d}};
  doc["training"] = {{"mode", to_string(cfg.train.loss.mode)},
                     {"lr", cfg.train.adam.lr},
                     {"weight_decay", cfg.train.adam.weight_decay},
                     {"batch_size", cfg.train.batch_size},
                     {"mc_samples", cfg.train.loss.mc_samples},
                     {"mfvi_steps", cfg.train.loss.mfvi_steps},
                     {"init_from_equinet", cfg.train.loss.init_from_equinet},
                     {"patience", cfg.train.patience},
                     {"max_epochs", cfg.train.max_epochs},
                     {"seeds", cfg.seeds}};
  if (cfg.train.n_out.fixed)
    doc["eval"]["n_out"] = *cfg.train.n_out.fixed;
  else
    doc["eval"]["n_out"] = "per-sample";
  doc["eval"]["tolerance"] = cfg.tolerance;
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

}  // namespace inset
