#pragma once

#include "inset/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace inset {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Moment accumulators for a fixed list of parameter tensors.
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;
  explicit AdamState(AdamHyper h) : hyper(h) {}

  /// Lazily shapes the accumulators after the parameters on first use.
  void ensure_shapes(std::span<Tensor* const> params) {
    if (m.empty()) {
      for (const Tensor* p : params) {
        m.emplace_back(p->rows(), p->cols());
        v.emplace_back(p->rows(), p->cols());
      }
    }
    if (m.size() != params.size()) throw std::invalid_argument("adam: parameter count changed");
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!m[k].same_shape(*params[k]))
        throw std::invalid_argument("adam: moment shape " + m[k].shape_str() +
                                    " does not match parameter " + params[k]->shape_str());
    }
  }
};

/// One Adam update with decoupled weight decay (AdamW form):
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: params/grads count");
  state.ensure_shapes(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].same_shape(*params[k]))
      throw std::invalid_argument("adam: gradient shape " + grads[k].shape_str() +
                                  " does not match parameter " + params[k]->shape_str());
  }
  const AdamHyper& h = state.hyper;
  ++state.step;
  const double t = double(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] -= h.lr * (mh / (std::sqrt(vh) + h.eps) + h.weight_decay * p[i]);
    }
  }
}

}  // namespace inset
