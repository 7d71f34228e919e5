#pragma once

#include "inset/params.hpp"
#include "inset/set_sample.hpp"
#include "inset/tape.hpp"
#include "inset/tensor.hpp"

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

/// Parameters registered on a tape.
struct ParamVars {
  ModelVariant variant = ModelVariant::Inset;
  Var phi_w, phi_b, theta1_w, theta1_b, theta2_w, theta2_b, out_w, out_b;
  Var eq_elem_w, eq_elem_b, eq_ctx_w, eq_ctx_b, eq_out_w, eq_out_b;

  std::array<Var*, InsetParams::kTensorCount> vars() {
    return {&phi_w,    &phi_b,    &theta1_w,  &theta1_b,  &theta2_w, &theta2_b, &out_w,
            &out_b,    &eq_elem_w, &eq_elem_b, &eq_ctx_w, &eq_ctx_b, &eq_out_w, &eq_out_b};
  }
  std::array<const Var*, InsetParams::kTensorCount> vars() const {
    return {&phi_w,    &phi_b,    &theta1_w,  &theta1_b,  &theta2_w, &theta2_b, &out_w,
            &out_b,    &eq_elem_w, &eq_elem_b, &eq_ctx_w, &eq_ctx_b, &eq_out_w, &eq_out_b};
  }
};

inline ParamVars bind(Tape& tape, const InsetParams& p, bool trainable = true) {
  ParamVars pv;
  pv.variant = p.variant;
  auto src = p.tensors();
  auto dst = pv.vars();
  for (std::size_t k = 0; k < InsetParams::kTensorCount; ++k)
    *dst[k] = trainable ? tape.leaf(*src[k]) : tape.constant(*src[k]);
  return pv;
}

/// Gradients of every bound parameter after a backward pass, in InsetParams order.
inline std::vector<Tensor> collect_grads(const ParamVars& pv) {
  std::vector<Tensor> out;
  for (const Var* v : pv.vars()) out.push_back(v->grad());
  return out;
}

inline void check_features(const InsetParams& p, const Tensor& features) {
  if (features.cols() != p.dims.d)
    throw ShapeError("feature width " + std::to_string(features.cols()) +
                     " does not match model input width " + std::to_string(p.dims.d));
  if (features.rows() == 0) throw ShapeError("empty ground set");
}

// ---- taped forward pieces ----

/// phi(x_i) for every row: n x h.
inline Var init_layer(const ParamVars& pv, Var features) {
  return linear(features, pv.phi_w, pv.phi_b);
}

/// Context term theta2(sum_V phi) for INSET; invalid Var (tape == nullptr) for DEEPSETS_ONLY.
inline Var superset_context(const ParamVars& pv, Var embeddings) {
  if (pv.variant != ModelVariant::Inset) return Var{};
  return linear(row_sum(embeddings), pv.theta2_w, pv.theta2_b);
}

/// Energy head applied to pre-activations z (k x h_d) -> k x 1.
inline Var energy_head(const ParamVars& pv, Var z) { return linear(relu(z), pv.out_w, pv.out_b); }

/// Energies F(S_r; V) for every mask row r of `masks` (k x n) -> k x 1.
inline Var inset_energy(const ParamVars& pv, Var embeddings, Var context, Var masks) {
  Var z = linear(masked_row_sum(embeddings, masks), pv.theta1_w, pv.theta1_b);
  if (context.tape != nullptr) z = add_row(z, context);
  return energy_head(pv, z);
}

/// EquiNet probabilities Y (n x 1).
inline Var equinet(const ParamVars& pv, Var embeddings) {
  Var e = linear(embeddings, pv.eq_elem_w, pv.eq_elem_b);
  if (pv.variant == ModelVariant::Inset)
    e = add_row(e, linear(row_sum(embeddings), pv.eq_ctx_w, pv.eq_ctx_b));
  return sigmoid(linear(relu(e), pv.eq_out_w, pv.eq_out_b));
}

// ---- value-only entry points ----

inline Tensor init_layer(const InsetParams& p, const Tensor& features) {
  check_features(p, features);
  Tensor out = matmul(features, p.phi_w);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += p.phi_b(0, c);
  return out;
}

inline double inset_energy(const InsetParams& p, const Tensor& features, const SubsetMask& mask) {
  check_features(p, features);
  if (mask.size() != features.rows())
    throw ShapeError("mask length " + std::to_string(mask.size()) + " does not match n=" +
                     std::to_string(features.rows()));
  Tape tape;
  ParamVars pv = bind(tape, p, false);
  Var phi = init_layer(pv, tape.constant(features));
  Var ctx = superset_context(pv, phi);
  return inset_energy(pv, phi, ctx, tape.constant(mask.indicator_row())).value().item();
}

inline std::vector<double> equinet_probs(const InsetParams& p, const Tensor& features) {
  check_features(p, features);
  Tape tape;
  ParamVars pv = bind(tape, p, false);
  Var y = equinet(pv, init_layer(pv, tape.constant(features)));
  const auto v = y.value().values();
  return {v.begin(), v.end()};
}

/// Per-sample quantities shared by every energy evaluation on one ground set:
/// embeddings, their theta1 projections, and the ground-set context. Pools are
/// summed in canonical element order instead of the taped per-column sort, so
/// results agree with the taped path to rounding and are exactly invariant.
class EnergyBasis {
 public:
  EnergyBasis(const InsetParams& p, const Tensor& features)
      : p_(&p), order_(canonical_order(features)) {
    phi_ = init_layer(p, features);
    proj_ = matmul(phi_, p.theta1_w);
    if (p.variant == ModelVariant::Inset) {
      const Tensor pool = subset_pool(SubsetMask(phi_.rows(), true));
      ctx_ = matmul(pool, p.theta2_w);
      for (std::size_t c = 0; c < ctx_.cols(); ++c) ctx_(0, c) += p.theta2_b(0, c);
    }
  }

  std::size_t n() const noexcept { return phi_.rows(); }
  const InsetParams& params() const noexcept { return *p_; }
  const Tensor& embeddings() const noexcept { return phi_; }
  /// Row i is phi(x_i) * theta1_w.
  const Tensor& projections() const noexcept { return proj_; }

  /// Subset pool (1 x h), accumulated in canonical element order.
  Tensor subset_pool(const SubsetMask& mask) const {
    check_mask(mask);
    Tensor pool(1, phi_.cols());
    double* acc = &pool(0, 0);
    for (std::size_t i : order_) {
      if (!mask.contains(i)) continue;
      const double* row = &phi_(i, 0);
      for (std::size_t c = 0; c < phi_.cols(); ++c) acc[c] += row[c];
    }
    return pool;
  }

  /// Canonical element order of the ground set (see canonical_order).
  std::span<const std::size_t> order() const noexcept { return order_; }

  /// Head pre-activation for a subset pool (1 x h_d).
  Tensor preactivation(const Tensor& pool) const {
    Tensor z = matmul(pool, p_->theta1_w);
    for (std::size_t c = 0; c < z.cols(); ++c) z(0, c) += p_->theta1_b(0, c);
    if (!ctx_.empty())
      for (std::size_t c = 0; c < z.cols(); ++c) z(0, c) += ctx_(0, c);
    return z;
  }

  /// out_head(ReLU(z)) for a 1 x h_d pre-activation, optionally shifted by
  /// `sign` times projection row i.
  double head(std::span<const double> z, std::size_t shift_row = 0, double sign = 0.0) const {
    double acc = 0.0;
    const Tensor& w = p_->out_w;
    if (sign == 0.0) {
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double a = z[c] > 0.0 ? z[c] : 0.0;
        if (a != 0.0) acc += a * w(c, 0);
      }
    } else {
      const auto row = proj_.row_span(shift_row);
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double v = z[c] + sign * row[c];
        const double a = v > 0.0 ? v : 0.0;
        if (a != 0.0) acc += a * w(c, 0);
      }
    }
    return acc + p_->out_b(0, 0);
  }

  double energy(const SubsetMask& mask) const {
    const Tensor z = preactivation(subset_pool(mask));
    return head(z.values());
  }

  /// gain_i = F(S + i) - F(S - i) for every element.
  std::vector<double> marginal_gains(const SubsetMask& mask) const {
    const Tensor z = preactivation(subset_pool(mask));
    return gains_from_preactivation(z, mask);
  }

  std::vector<double> gains_from_preactivation(const Tensor& z, const SubsetMask& mask) const {
    const double f = head(z.values());
    std::vector<double> g(n());
    for (std::size_t i = 0; i < n(); ++i)
      g[i] = mask.contains(i) ? f - head(z.values(), i, -1.0) : head(z.values(), i, +1.0) - f;
    return g;
  }

  void check_mask(const SubsetMask& mask) const {
    if (mask.size() != n())
      throw ShapeError("mask length " + std::to_string(mask.size()) + " does not match n=" +
                       std::to_string(n()));
  }

 private:
  const InsetParams* p_;
  std::vector<std::size_t> order_;
  Tensor phi_, proj_, ctx_;
};

enum class Toggle { Add, Remove };

/// Subset state with cached pool and pre-activation, supporting O(h_d)
/// single-element add/remove energy queries.
class EnergyCache {
 public:
  EnergyCache(const InsetParams& p, const Tensor& features, SubsetMask mask)
      : basis_(p, features), mask_(std::move(mask)) {
    basis_.check_mask(mask_);
    refresh();
  }

  const SubsetMask& mask() const noexcept { return mask_; }
  const EnergyBasis& basis() const noexcept { return basis_; }
  double energy() const { return energy_; }

  /// Energy of the mask with element i added or removed, without changing state.
  double toggled_energy(std::size_t i, Toggle t) const {
    check_toggle(i, t);
    return basis_.head(z_.values(), i, t == Toggle::Add ? 1.0 : -1.0);
  }

  void apply(std::size_t i, Toggle t) {
    check_toggle(i, t);
    mask_.set(i, t == Toggle::Add);
    refresh();
  }

  std::vector<double> marginal_gains() const { return basis_.gains_from_preactivation(z_, mask_); }

 private:
  void check_toggle(std::size_t i, Toggle t) const {
    if (i >= mask_.size()) throw std::out_of_range("element index " + std::to_string(i) + " out of range");
    if (t == Toggle::Add && mask_.contains(i))
      throw std::invalid_argument("element " + std::to_string(i) + " is already in the subset");
    if (t == Toggle::Remove && !mask_.contains(i))
      throw std::invalid_argument("element " + std::to_string(i) + " is not in the subset");
  }
  void refresh() {
    z_ = basis_.preactivation(basis_.subset_pool(mask_));
    energy_ = basis_.head(z_.values());
  }

  EnergyBasis basis_;
  SubsetMask mask_;
  Tensor z_;
  double energy_ = 0.0;
};

/// Set-function view of a model on one ground set, for the EBM routines.
class ModelEnergy {
 public:
  ModelEnergy(const InsetParams& p, const Tensor& features) : basis_(p, features) {}

  std::size_t size() const noexcept { return basis_.n(); }
  double operator()(const SubsetMask& mask) const { return basis_.energy(mask); }
  std::vector<double> marginal_gains(const SubsetMask& mask) const {
    return basis_.marginal_gains(mask);
  }
  /// Element order in which per-element random draws are consumed.
  std::span<const std::size_t> draw_order() const noexcept { return basis_.order(); }
  const EnergyBasis& basis() const noexcept { return basis_; }

 private:
  EnergyBasis basis_;
};

}  // namespace inset
