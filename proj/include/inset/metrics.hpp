#pragma once

#include "inset/set_sample.hpp"
#include "inset/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

/// |a & b| / |a | b|; two empty sets score 1.
inline double jaccard(std::vector<std::size_t> a, std::vector<std::size_t> b) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const std::size_t uni = a.size() + b.size() - inter.size();
  return double(inter.size()) / double(uni);
}

/// The n_out largest probabilities; equal values prefer the lower element index.
inline SubsetMask topn_round(std::span<const double> y, std::size_t n_out) {
  if (n_out < 1 || n_out > y.size())
    throw std::invalid_argument("topn_round: n_out=" + std::to_string(n_out) + " outside [1, " +
                                std::to_string(y.size()) + "]");
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  SubsetMask m(y.size());
  for (std::size_t k = 0; k < n_out; ++k) m.set(idx[k]);
  return m;
}

/// Where TopN gets its N: the evaluated sample's |S*| (default) or a fixed value.
struct NOutRule {
  std::optional<std::size_t> fixed;

  std::size_t resolve(const SetSample& s) const {
    const std::size_t n = fixed ? *fixed : s.optimal_subset.size();
    return std::min(n, s.n());
  }
  std::string describe() const {
    return fixed ? "fixed-" + std::to_string(*fixed) : std::string("per-sample");
  }
};

struct SeedResult {
  std::uint64_t seed = 0;
  double mjc = 0.0;
  double wall_seconds = 0.0;
  std::string status = "ok";  // "ok" or a failure description
  std::size_t epochs = 0;
};

/// MJC results for one (task, method) cell, possibly over several seeds.
struct MetricsReport {
  std::string task;
  std::string method;
  std::string n_out_rule = "per-sample";
  std::vector<SeedResult> runs;
  std::vector<double> per_sample_jc;  // filled by single-run evaluation
  double mean = 0.0;
  double std = 0.0;

  /// Mean and population standard deviation over successful runs.
  void aggregate() {
    std::vector<double> vals;
    for (const auto& r : runs)
      if (r.status == "ok") vals.push_back(r.mjc);
    if (vals.empty()) {
      mean = std::nan("");
      std = std::nan("");
      return;
    }
    std::vector<double> tmp = vals;
    mean = canonical_sum(tmp) / double(vals.size());
    std::vector<double> sq;
    for (double v : vals) sq.push_back((v - mean) * (v - mean));
    std = std::sqrt(canonical_sum(sq) / double(vals.size()));
  }

  std::size_t ok_runs() const {
    return std::size_t(std::count_if(runs.begin(), runs.end(), [](const SeedResult& r) { return r.status == "ok"; }));
  }
};

/// Mean Jaccard coefficient of `predict(sample, index, n_out) -> SubsetMask` over
/// the samples. The mean is taken with an order-independent summation.
template <class Predict>
MetricsReport evaluate_mjc(Predict&& predict, const std::vector<SetSample>& samples,
                           const NOutRule& rule = {}) {
  if (samples.empty()) throw std::invalid_argument("evaluate_mjc: no samples");
  MetricsReport rep;
  rep.n_out_rule = rule.describe();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const SetSample& s = samples[k];
    const SubsetMask pred = predict(s, k, rule.resolve(s));
    rep.per_sample_jc.push_back(jaccard(s.optimal_subset, pred.indices()));
  }
  std::vector<double> tmp = rep.per_sample_jc;
  const double mjc = canonical_sum(tmp) / double(samples.size());
  rep.runs.push_back(SeedResult{0, mjc, 0.0, "ok", 0});
  rep.aggregate();
  return rep;
}

// ---- export ----

inline std::string fmt_fixed(double v, int prec = 3) {
  if (std::isnan(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

/// One row per run plus a summary row per cell. Wall-clock is deliberately not
/// included so the file is reproducible byte for byte.
inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsReport>& reps) {
  os << "# n_out_rule=" << (reps.empty() ? "per-sample" : reps.front().n_out_rule) << "\n";
  os << "task,method,seed,mjc,status,epochs\n";
  for (const auto& r : reps) {
    for (const auto& s : r.runs)
      os << r.task << ',' << r.method << ',' << s.seed << ',' << std::setprecision(17) << s.mjc
         << ',' << s.status << ',' << s.epochs << "\n";
    os << r.task << ',' << r.method << ",mean," << std::setprecision(17) << r.mean << ",ok,\n";
    os << r.task << ',' << r.method << ",std," << std::setprecision(17) << r.std << ",ok,\n";
  }
}

inline void write_timing_csv(std::ostream& os, const std::vector<MetricsReport>& reps) {
  os << "task,method,seed,wall_seconds\n";
  for (const auto& r : reps)
    for (const auto& s : r.runs)
      os << r.task << ',' << r.method << ',' << s.seed << ',' << std::fixed << std::setprecision(3)
         << s.wall_seconds << "\n";
}

/// Aligned method x task table of "mean ± std" cells; missing cells print "-".
inline void write_table(std::ostream& os, const std::vector<MetricsReport>& reps) {
  std::vector<std::string> tasks, methods;
  for (const auto& r : reps) {
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  auto cell = [&](const std::string& m, const std::string& t) -> std::string {
    for (const auto& r : reps)
      if (r.method == m && r.task == t) {
        if (std::isnan(r.mean)) return "-";
        if (r.runs.size() <= 1) return fmt_fixed(r.mean);
        return fmt_fixed(r.mean) + " ± " + fmt_fixed(r.std);
      }
    return "-";
  };
  // "±" is two bytes in UTF-8 but one column wide
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::size_t mw = std::string("Method").size();
  for (const auto& m : methods) mw = std::max(mw, width(m));
  std::vector<std::size_t> tw;
  for (const auto& t : tasks) {
    std::size_t w = width(t);
    for (const auto& m : methods) w = std::max(w, width(cell(m, t)));
    tw.push_back(w);
  }
  auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w - width(s), ' '); };
  os << "# n_out_rule=" << (reps.empty() ? "per-sample" : reps.front().n_out_rule) << "\n";
  os << pad("Method", mw);
  for (std::size_t k = 0; k < tasks.size(); ++k) os << "  " << pad(tasks[k], tw[k]);
  os << "\n";
  std::size_t total = mw;
  for (auto w : tw) total += 2 + w;
  os << std::string(total, '-') << "\n";
  for (const auto& m : methods) {
    os << pad(m, mw);
    for (std::size_t k = 0; k < tasks.size(); ++k) os << "  " << pad(cell(m, tasks[k]), tw[k]);
    os << "\n";
  }
}

}  // namespace inset
