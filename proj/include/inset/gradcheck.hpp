#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace inset {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;

  bool passed(double tol) const { return finite && max_rel_error <= tol; }
};

/// Compares an analytic gradient against central differences.
/// error_k = |analytic_k - fd_k| / max(1, |fd_k|); the maximum is reported.
/// Non-differentiable points (ReLU kinks, |x| at 0) are not supported and
/// will typically show up as large errors.
template <class ValueFn>
GradCheckResult finite_diff_check(ValueFn&& value, std::span<const double> analytic,
                                  std::vector<double> point, double step) {
  GradCheckResult res;
  if (analytic.size() != point.size()) {
    res.finite = false;
    res.max_rel_error = std::numeric_limits<double>::infinity();
    return res;
  }
  for (std::size_t k = 0; k < point.size(); ++k) {
    const double x0 = point[k];
    point[k] = x0 + step;
    const double fp = value(std::span<const double>(point));
    point[k] = x0 - step;
    const double fm = value(std::span<const double>(point));
    point[k] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[k])) {
      res.finite = false;
      res.max_rel_error = std::numeric_limits<double>::infinity();
      res.worst_index = k;
      return res;
    }
    const double fd = (fp - fm) / (2.0 * step);
    const double err = std::abs(analytic[k] - fd) / std::max(1.0, std::abs(fd));
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = k;
    }
  }
  return res;
}

/// Convenience overload for a callable returning the analytic gradient at a point.
template <class ValueFn, class GradFn>
  requires std::invocable<GradFn&, std::span<const double>>
GradCheckResult finite_diff_check(ValueFn&& value, GradFn&& gradient, std::vector<double> point,
                                  double step) {
  const std::vector<double> g = gradient(std::span<const double>(point));
  return finite_diff_check(value, std::span<const double>(g), std::move(point), step);
}

}  // namespace inset
