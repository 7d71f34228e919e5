#pragma once

#include "inset/model.hpp"
#include "inset/rng.hpp"
#include "inset/set_sample.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace inset {

struct InvarianceReport {
  std::size_t trials = 0;
  double max_energy_deviation = 0.0;       // max |F(pi V, pi S) - F(V, S)|
  double max_equivariance_deviation = 0.0; // max ||pi Y(V) - Y(pi V)||_inf
  double tolerance = 0.0;
  bool passed = false;
};

inline void write_report(std::ostream& os, const InvarianceReport& r) {
  os << "trials=" << r.trials << " max_energy_deviation=" << r.max_energy_deviation
     << " max_equivariance_deviation=" << r.max_equivariance_deviation
     << " tolerance=" << r.tolerance << " result=" << (r.passed ? "pass" : "fail") << "\n";
}

/// Random (sample, mask, permutation) trials against any energy
/// `energy(features, mask) -> double` and per-element `probs(features) -> vector`.
/// Masks include each element with probability 1/2. Passes iff both maxima are
/// within `tolerance` (0 demands bitwise equality).
template <class EnergyFn, class ProbFn>
InvarianceReport invariance_suite(EnergyFn&& energy, ProbFn&& probs,
                                  const std::vector<SetSample>& samples, std::size_t trials,
                                  double tolerance, Rng& rng) {
  if (trials == 0) throw std::invalid_argument("invariance_suite: trials must be >= 1");
  if (samples.empty()) throw std::invalid_argument("invariance_suite: no samples");
  InvarianceReport rep;
  rep.trials = trials;
  rep.tolerance = tolerance;
  for (std::size_t t = 0; t < trials; ++t) {
    const SetSample& s = samples[std::size_t(rng() % samples.size())];
    const std::size_t n = s.n();
    SubsetMask mask(n);
    for (std::size_t i = 0; i < n; ++i) mask.set(i, (rng() >> 63) != 0);
    const auto perm = random_permutation(n, rng);
    const SetSample ps = s.permuted(perm);
    const double f0 = energy(s.features, mask);
    const double f1 = energy(ps.features, mask.permuted(perm));
    rep.max_energy_deviation = std::max(rep.max_energy_deviation, std::abs(f0 - f1));
    const std::vector<double> y0 = probs(s.features);
    const std::vector<double> y1 = probs(ps.features);
    for (std::size_t i = 0; i < n; ++i)
      rep.max_equivariance_deviation =
          std::max(rep.max_equivariance_deviation, std::abs(y0[i] - y1[perm[i]]));
  }
  rep.passed = rep.max_energy_deviation <= tolerance && rep.max_equivariance_deviation <= tolerance;
  return rep;
}

inline InvarianceReport invariance_suite(const InsetParams& p, const std::vector<SetSample>& samples,
                                         std::size_t trials, double tolerance, Rng& rng) {
  return invariance_suite(
      [&](const Tensor& x, const SubsetMask& m) { return inset_energy(p, x, m); },
      [&](const Tensor& x) { return equinet_probs(p, x); }, samples, trials, tolerance, rng);
}

}  // namespace inset
