#pragma once

#include "inset/ebm.hpp"
#include "inset/model.hpp"
#include "inset/modes.hpp"
#include "inset/params.hpp"
#include "inset/rng.hpp"
#include "inset/set_sample.hpp"
#include "inset/tape.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace inset {

struct LossHyper {
  TrainMode mode = TrainMode::Variational;
  std::size_t mc_samples = 5;   // m
  std::size_t mfvi_steps = 5;   // K
  bool init_from_equinet = true;  // Y0 = EquiNet(V), otherwise 0.5
};

/// All 2^n masks as rows of a (2^n x n) 0/1 matrix, row `code` = bits of code.
inline Tensor all_masks(std::size_t n) {
  check_enumerable(n);
  const std::uint64_t total = std::uint64_t{1} << n;
  Tensor m(std::size_t(total), n);
  for (std::uint64_t code = 0; code < total; ++code)
    for (std::size_t i = 0; i < n; ++i) m(std::size_t(code), i) = double((code >> i) & 1u);
  return m;
}

/// Draw order for MC sampling during training: canonical over features, with
/// target membership as tie-break so duplicated rows stay distinguishable.
inline std::vector<std::size_t> training_draw_order(const SetSample& s) {
  const SubsetMask t = s.target_mask();
  std::vector<std::uint8_t> key(s.n());
  for (std::size_t i = 0; i < s.n(); ++i) key[i] = t.contains(i) ? 1 : 0;
  return canonical_order(s.features, key);
}

/// Initial mean-field state for a ground set.
inline VariationalState initial_state(const InsetParams& p, const Tensor& features,
                                      bool from_equinet) {
  if (!from_equinet) return VariationalState::uniform(features.rows());
  return VariationalState(equinet_probs(p, features));
}

/// MC-averaged marginal gains recorded on the tape for a batch of fixed masks:
/// gain_i = F(S+i) - F(S-i), averaged over the masks. Returns n x 1.
/// With sigma_i = +1 outside S and -1 inside, gain_i = sigma_i (F(S + sigma_i i) - F(S)),
/// so each mask needs one shifted head pass.
inline Var taped_mean_gains(const ParamVars& pv, Var embeddings, Var context,
                            const std::vector<SubsetMask>& masks) {
  Tape& tape = *embeddings.tape;
  Var proj = matmul(embeddings, pv.theta1_w);
  Var acc{};
  for (const SubsetMask& s : masks) {
    Var z = linear(masked_row_sum(embeddings, tape.constant(s.indicator_row())), pv.theta1_w,
                   pv.theta1_b);
    if (context.tape != nullptr) z = add_row(z, context);
    Tensor sigma(s.size(), 1);
    for (std::size_t i = 0; i < s.size(); ++i) sigma[i] = s.contains(i) ? -1.0 : 1.0;
    Var sg = tape.constant(std::move(sigma));
    Var shifted = energy_head(pv, add_row(mul_col(proj, sg), z));
    Var g = mul_col(add_row(shifted, scale(energy_head(pv, z), -1.0)), sg);
    acc = acc.tape == nullptr ? g : add(acc, g);
  }
  return scale(acc, 1.0 / double(masks.size()));
}

/// Training objective for one sample, recorded on `pv`'s tape.
///   EXACT       -> -log p(S*|V) with the partition function enumerated
///   VARIATIONAL -> BCE(Y_K, 1[S*]) where Y_K is the K-step mean-field fixed
///                  point started from EquiNet; sampled masks are constants
///   DIRECT      -> BCE(EquiNet(V), 1[S*])
inline Var training_loss(const ParamVars& pv, const InsetParams& p, const SetSample& s,
                         const LossHyper& hyper, Rng& rng) {
  Tape& tape = *pv.phi_w.tape;
  check_features(p, s.features);
  const Tensor target = s.target_mask().indicator_column();
  Var embeddings = init_layer(pv, tape.constant(s.features));

  switch (hyper.mode) {
    case TrainMode::Exact: {
      check_enumerable(s.n());
      Var ctx = superset_context(pv, embeddings);
      Var all = inset_energy(pv, embeddings, ctx, tape.constant(all_masks(s.n())));
      Var star = inset_energy(pv, embeddings, ctx, tape.constant(s.target_mask().indicator_row()));
      return sub(logsumexp(all), star);
    }
    case TrainMode::Variational: {
      if (hyper.mfvi_steps == 0 || hyper.mc_samples == 0)
        throw std::invalid_argument("variational loss needs K >= 1 and m >= 1");
      const std::vector<std::size_t> order = training_draw_order(s);
      VariationalState q = initial_state(p, s.features, hyper.init_from_equinet);
      if (hyper.mfvi_steps > 1) {
        const ModelEnergy f(p, s.features);
        q = mfvi(f, std::move(q), hyper.mfvi_steps - 1, hyper.mc_samples, rng, order);
      }
      std::vector<SubsetMask> masks;
      for (std::size_t k = 0; k < hyper.mc_samples; ++k) masks.push_back(sample_mask(q, rng, order));
      Var ctx = superset_context(pv, embeddings);
      Var y = sigmoid(taped_mean_gains(pv, embeddings, ctx, masks));
      return bce(y, tape.constant(target));
    }
    case TrainMode::Direct:
      return bce(equinet(pv, embeddings), tape.constant(target));
  }
  throw std::logic_error("unknown training mode");
}

/// Loss value only (fresh tape, parameters as constants).
inline double training_loss_value(const InsetParams& p, const SetSample& s, const LossHyper& hyper,
                                  Rng& rng) {
  Tape tape;
  const ParamVars pv = bind(tape, p, false);
  return training_loss(pv, p, s, hyper, rng).value().item();
}

}  // namespace inset
