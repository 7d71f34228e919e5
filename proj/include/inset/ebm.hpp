#pragma once

#include "inset/rng.hpp"
#include "inset/set_sample.hpp"
#include "inset/tape.hpp"
#include "inset/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

/// Largest ground set for which the 2^n enumeration routines run.
inline constexpr std::size_t kMaxEnumerationSize = 20;

class EnumerationLimit : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void check_enumerable(std::size_t n) {
  if (n > kMaxEnumerationSize)
    throw EnumerationLimit("exact enumeration over 2^" + std::to_string(n) +
                           " subsets refused (limit n <= " + std::to_string(kMaxEnumerationSize) +
                           "); use the variational training mode for larger ground sets");
}

/// Scalar set function F(S; V) over masks of a fixed ground set.
template <class F>
concept SetFunction = requires(const F& f, const SubsetMask& m) {
  { f(m) } -> std::convertible_to<double>;
};

/// Set functions that can produce all marginal gains F(S+i) - F(S-i) at once.
template <class F>
concept GainOracle = SetFunction<F> && requires(const F& f, const SubsetMask& m) {
  { f.marginal_gains(m) } -> std::convertible_to<std::vector<double>>;
};

template <SetFunction F>
std::vector<double> marginal_gains(const F& f, const SubsetMask& mask) {
  if constexpr (GainOracle<F>) {
    return f.marginal_gains(mask);
  } else {
    std::vector<double> g(mask.size());
    SubsetMask m = mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const bool had = m.contains(i);
      m.set(i, true);
      const double with = f(m);
      m.set(i, false);
      const double without = f(m);
      m.set(i, had);
      g[i] = with - without;
    }
    return g;
  }
}

/// F evaluated at every mask; entry `code` is the mask whose bit i marks element i.
template <SetFunction F>
std::vector<double> enumerate_energies(const F& f, std::size_t n) {
  check_enumerable(n);
  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<double> e(total);
  for (std::uint64_t code = 0; code < total; ++code) e[code] = f(SubsetMask::from_bits(n, code));
  return e;
}

inline double log_sum_exp(std::span<const double> values) {
  const double mx = *std::max_element(values.begin(), values.end());
  std::vector<double> terms(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) terms[i] = std::exp(values[i] - mx);
  return mx + std::log(canonical_sum(terms));
}

/// log Z = log sum_{S subset V} exp F(S; V).
template <SetFunction F>
double exact_log_partition(const F& f, std::size_t n) {
  const auto e = enumerate_energies(f, n);
  return log_sum_exp(e);
}

/// log p(S*|V) = F(S*; V) - log Z.
template <SetFunction F>
double exact_log_likelihood(const F& f, const SubsetMask& target) {
  const std::size_t n = target.size();
  return f(target) - exact_log_partition(f, n);
}

/// Inclusion probabilities p(i in S) under p(S|V) = exp F / Z.
template <SetFunction F>
std::vector<double> exact_marginals(const F& f, std::size_t n) {
  const auto e = enumerate_energies(f, n);
  const double log_z = log_sum_exp(e);
  std::vector<std::vector<double>> terms(n);
  for (std::uint64_t code = 0; code < e.size(); ++code) {
    const double p = std::exp(e[code] - log_z);
    for (std::size_t i = 0; i < n; ++i)
      if ((code >> i) & 1u) terms[i].push_back(p);
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = canonical_sum(terms[i]);
  return out;
}

/// Mean-field Bernoulli probabilities, each kept inside [kProbClamp, 1 - kProbClamp].
struct VariationalState {
  std::vector<double> y;

  VariationalState() = default;
  explicit VariationalState(std::vector<double> probs) : y(std::move(probs)) { clamp(); }
  static VariationalState uniform(std::size_t n) { return VariationalState(std::vector<double>(n, 0.5)); }

  std::size_t size() const noexcept { return y.size(); }
  void clamp() {
    for (double& v : y) v = clamp_prob(v);
  }
};

/// Draws S ~ q(.|Y). Element draws are consumed in `order` (identity when empty)
/// so that relabeling the ground set consistently relabels the sample.
inline SubsetMask sample_mask(const VariationalState& q, Rng& rng,
                              std::span<const std::size_t> order = {}) {
  const std::size_t n = q.size();
  SubsetMask m(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order.empty() ? k : order[k];
    m.set(i, uniform01(rng) < q.y[i]);
  }
  return m;
}

/// Monte-Carlo estimate of E_{S~q}[F(S+i) - F(S-i)] from m samples.
template <SetFunction F>
std::vector<double> mc_marginal_gains(const F& f, const VariationalState& q, std::size_t m,
                                      Rng& rng, std::span<const std::size_t> order = {}) {
  if (m == 0) throw std::invalid_argument("mc_marginal_gains: sample count must be >= 1");
  const std::size_t n = q.size();
  std::vector<double> acc(n, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const SubsetMask s = sample_mask(q, rng, order);
    const auto g = marginal_gains(f, s);
    if (g.size() != n) throw std::invalid_argument("mc_marginal_gains: gain vector size mismatch");
    for (std::size_t i = 0; i < n; ++i) acc[i] += g[i];
  }
  for (double& v : acc) v /= double(m);
  return acc;
}

/// Mean-field fixed-point iteration Y <- sigmoid(MC marginal gains), K steps.
template <SetFunction F>
VariationalState mfvi(const F& f, VariationalState y, std::size_t steps, std::size_t m, Rng& rng,
                      std::span<const std::size_t> order = {}) {
  if (steps == 0) throw std::invalid_argument("mfvi: step count must be >= 1");
  for (std::size_t k = 0; k < steps; ++k) {
    const auto g = mc_marginal_gains(f, y, m, rng, order);
    for (std::size_t i = 0; i < g.size(); ++i) y.y[i] = sigmoid(g[i]);
    y.clamp();
  }
  return y;
}

}  // namespace inset
