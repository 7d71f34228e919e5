#pragma once

#include "inset/modes.hpp"
#include "inset/rng.hpp"
#include "inset/tensor.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace inset {

struct ModelDims {
  std::size_t d = 2;     // element feature width
  std::size_t h = 64;    // embedding width
  std::size_t h_d = 128; // hidden width of the heads

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Full-scale widths; the synthetic benches default to ModelDims{} instead.
inline constexpr ModelDims kFullScaleDims{2, 256, 500};

/// Every learnable tensor of the energy network and EquiNet. Linear layers are
/// stored as (in x out) weights and (1 x out) biases.
struct InsetParams {
  static constexpr std::size_t kTensorCount = 14;

  ModelDims dims;
  ModelVariant variant = ModelVariant::Inset;

  Tensor phi_w, phi_b;        // element encoder, d -> h (shared)
  Tensor theta1_w, theta1_b;  // subset-pool head, h -> h_d
  Tensor theta2_w, theta2_b;  // ground-set-pool head, h -> h_d
  Tensor out_w, out_b;        // energy output, h_d -> 1
  Tensor eq_elem_w, eq_elem_b;  // EquiNet per-element head, h -> h_d
  Tensor eq_ctx_w, eq_ctx_b;    // EquiNet context head, h -> h_d
  Tensor eq_out_w, eq_out_b;    // EquiNet output, h_d -> 1

  static constexpr std::array<const char*, kTensorCount> kNames = {
      "phi_w",     "phi_b",     "theta1_w",  "theta1_b", "theta2_w",
      "theta2_b",  "out_w",     "out_b",     "eq_elem_w", "eq_elem_b",
      "eq_ctx_w",  "eq_ctx_b",  "eq_out_w",  "eq_out_b"};

  std::array<Tensor*, kTensorCount> tensors() {
    return {&phi_w,    &phi_b,    &theta1_w,  &theta1_b,  &theta2_w, &theta2_b, &out_w,
            &out_b,    &eq_elem_w, &eq_elem_b, &eq_ctx_w, &eq_ctx_b, &eq_out_w, &eq_out_b};
  }
  std::array<const Tensor*, kTensorCount> tensors() const {
    return {&phi_w,    &phi_b,    &theta1_w,  &theta1_b,  &theta2_w, &theta2_b, &out_w,
            &out_b,    &eq_elem_w, &eq_elem_b, &eq_ctx_w, &eq_ctx_b, &eq_out_w, &eq_out_b};
  }

  /// Expected (rows, cols) of tensor k for the given dims.
  static std::array<std::size_t, 2> expected_shape(const ModelDims& m, std::size_t k) {
    const std::size_t in[] = {m.d, 1, m.h, 1, m.h, 1, m.h_d, 1, m.h, 1, m.h, 1, m.h_d, 1};
    const std::size_t out[] = {m.h, m.h, m.h_d, m.h_d, m.h_d, m.h_d, 1,
                               1,   m.h_d, m.h_d, m.h_d, m.h_d, 1,     1};
    return {in[k], out[k]};
  }

  static InsetParams zeros(ModelDims dims, ModelVariant variant) {
    InsetParams p;
    p.dims = dims;
    p.variant = variant;
    auto ts = p.tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k) {
      const auto s = expected_shape(dims, k);
      *ts[k] = Tensor(s[0], s[1]);
    }
    return p;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike.
  static InsetParams init(ModelDims dims, ModelVariant variant, Rng& rng) {
    InsetParams p = zeros(dims, variant);
    auto ts = p.tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k) {
      // biases (odd slots) share the fan-in of the weight before them
      const std::size_t fan_in = expected_shape(dims, k - (k % 2))[0];
      const double bound = 1.0 / std::sqrt(double(fan_in));
      for (double& v : ts[k]->values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    }
    return p;
  }

  void validate() const {
    if (dims.d == 0 || dims.h == 0 || dims.h_d == 0)
      throw std::invalid_argument("model dims must be positive");
    auto ts = tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k) {
      const auto s = expected_shape(dims, k);
      if (ts[k]->rows() != s[0] || ts[k]->cols() != s[1])
        throw std::invalid_argument(std::string("parameter ") + kNames[k] + " has shape " +
                                    ts[k]->shape_str() + ", expected (" + std::to_string(s[0]) +
                                    "x" + std::to_string(s[1]) + ")");
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
  }

  friend bool operator==(const InsetParams& a, const InsetParams& b) {
    if (!(a.dims == b.dims) || a.variant != b.variant) return false;
    auto ta = a.tensors();
    auto tb = b.tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k)
      if (!(*ta[k] == *tb[k])) return false;
    return true;
  }
};

}  // namespace inset
