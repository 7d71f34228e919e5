#pragma once

#include "inset/ebm.hpp"
#include "inset/loss.hpp"
#include "inset/metrics.hpp"
#include "inset/model.hpp"
#include "inset/rng.hpp"

#include <cstdint>
#include <vector>

namespace inset {

struct InferenceConfig {
  std::size_t mc_samples = 5;
  std::size_t mfvi_steps = 5;
  bool init_from_equinet = true;
  std::uint64_t seed = 0;
};

/// Selection probabilities for one ground set: EquiNet output for DIRECT-trained
/// models, the mean-field fixed point otherwise. `sample_index` picks the rng
/// stream so results do not depend on evaluation order.
inline std::vector<double> selection_probs(const InsetParams& p, TrainMode mode, const Tensor& features,
                                           const InferenceConfig& cfg, std::uint64_t sample_index) {
  if (mode == TrainMode::Direct) return equinet_probs(p, features);
  const ModelEnergy f(p, features);
  Rng rng = make_rng(cfg.seed, Stream::Eval, sample_index);
  VariationalState q = initial_state(p, features, cfg.init_from_equinet);
  q = mfvi(f, std::move(q), cfg.mfvi_steps, cfg.mc_samples, rng, f.draw_order());
  return q.y;
}

inline SubsetMask predict(const InsetParams& p, TrainMode mode, const SetSample& s,
                          std::size_t n_out, const InferenceConfig& cfg = {},
                          std::uint64_t sample_index = 0) {
  const auto y = selection_probs(p, mode, s.features, cfg, sample_index);
  return topn_round(y, n_out);
}

inline MetricsReport evaluate_model(const InsetParams& p, TrainMode mode,
                                    const std::vector<SetSample>& samples, const NOutRule& rule = {},
                                    const InferenceConfig& cfg = {}) {
  return evaluate_mjc(
      [&](const SetSample& s, std::size_t k, std::size_t n_out) {
        return predict(p, mode, s, n_out, cfg, k);
      },
      samples, rule);
}

/// Uniformly random subset of size n_out.
inline SubsetMask random_subset(std::size_t n, std::size_t n_out, Rng& rng) {
  const auto perm = random_permutation(n, rng);
  SubsetMask m(n);
  for (std::size_t k = 0; k < n_out; ++k) m.set(perm[k]);
  return m;
}

inline MetricsReport evaluate_random(const std::vector<SetSample>& samples, std::uint64_t seed,
                                     const NOutRule& rule = {}) {
  return evaluate_mjc(
      [&](const SetSample& s, std::size_t k, std::size_t n_out) {
        Rng rng = make_rng(seed, Stream::Random, k);
        return random_subset(s.n(), n_out, rng);
      },
      samples, rule);
}

}  // namespace inset
