#pragma once

#include "inset/adam.hpp"
#include "inset/binary_io.hpp"
#include "inset/modes.hpp"
#include "inset/params.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

namespace inset {

// Checkpoint layout, version 1 (integers little-endian, floats binary64 LE):
//   char[8] magic "INSETCKP"
//   u32 version (= 1)
//   u32 variant      (0 inset, 1 deepsets)
//   u32 train mode   (0 exact, 1 variational, 2 direct)
//   u32 d, u32 h, u32 h_d
//   u32 tensor count (= 14), then per tensor in InsetParams order:
//       u32 rows, u32 cols, f64 values[rows * cols] row-major
//   u32 has_progress (0 or 1); when 1:
//       u64 adam step, f64 lr, beta1, beta2, eps, weight_decay
//       u32 next epoch, u32 best epoch, u32 stale epochs, f64 best validation MJC
//       14 first-moment tensors, 14 second-moment tensors, 14 best-parameter tensors
//       (each tensor encoded as above)

inline constexpr char kCheckpointMagic[9] = "INSETCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Optimizer and early-stopping state needed to resume training exactly.
struct TrainProgress {
  AdamState adam;
  std::uint32_t next_epoch = 0;
  std::uint32_t best_epoch = 0;
  std::uint32_t stale_epochs = 0;
  double best_val = -1.0;
  InsetParams best;
};

struct Checkpoint {
  InsetParams params;
  TrainMode mode = TrainMode::Variational;
  std::optional<TrainProgress> progress;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_tensor(std::ostream& os, const Tensor& t) {
  bin::write_u32(os, std::uint32_t(t.rows()));
  bin::write_u32(os, std::uint32_t(t.cols()));
  for (double v : t.values()) bin::write_f64(os, v);
}

inline Tensor read_tensor(std::istream& is, std::size_t rows, std::size_t cols, const char* name) {
  const std::uint32_t r = bin::read_u32(is), c = bin::read_u32(is);
  if (r != rows || c != cols)
    throw CheckpointError(std::string("tensor ") + name + " has shape (" + std::to_string(r) + "x" +
                          std::to_string(c) + "), header dims imply (" + std::to_string(rows) +
                          "x" + std::to_string(cols) + ")");
  std::vector<double> v(std::size_t(r) * c);
  for (double& x : v) x = bin::read_f64(is);
  return Tensor(r, c, std::move(v));
}

inline void write_param_tensors(std::ostream& os, const InsetParams& p) {
  for (const Tensor* t : p.tensors()) write_tensor(os, *t);
}

inline void read_param_tensors(std::istream& is, InsetParams& p) {
  auto ts = p.tensors();
  for (std::size_t k = 0; k < InsetParams::kTensorCount; ++k) {
    const auto s = InsetParams::expected_shape(p.dims, k);
    *ts[k] = read_tensor(is, s[0], s[1], InsetParams::kNames[k]);
  }
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  const InsetParams& p = ck.params;
  p.validate();
  bin::write_magic(os, kCheckpointMagic);
  bin::write_u32(os, kCheckpointVersion);
  bin::write_u32(os, std::uint32_t(p.variant));
  bin::write_u32(os, std::uint32_t(ck.mode));
  bin::write_u32(os, std::uint32_t(p.dims.d));
  bin::write_u32(os, std::uint32_t(p.dims.h));
  bin::write_u32(os, std::uint32_t(p.dims.h_d));
  bin::write_u32(os, std::uint32_t(InsetParams::kTensorCount));
  detail::write_param_tensors(os, p);
  bin::write_u32(os, ck.progress ? 1u : 0u);
  if (ck.progress) {
    const TrainProgress& tp = *ck.progress;
    bin::write_u64(os, tp.adam.step);
    bin::write_f64(os, tp.adam.hyper.lr);
    bin::write_f64(os, tp.adam.hyper.beta1);
    bin::write_f64(os, tp.adam.hyper.beta2);
    bin::write_f64(os, tp.adam.hyper.eps);
    bin::write_f64(os, tp.adam.hyper.weight_decay);
    bin::write_u32(os, tp.next_epoch);
    bin::write_u32(os, tp.best_epoch);
    bin::write_u32(os, tp.stale_epochs);
    bin::write_f64(os, tp.best_val);
    InsetParams moments = InsetParams::zeros(p.dims, p.variant);
    auto mt = moments.tensors();
    for (int which = 0; which < 2; ++which) {
      const auto& src = which == 0 ? tp.adam.m : tp.adam.v;
      for (std::size_t k = 0; k < InsetParams::kTensorCount; ++k)
        detail::write_tensor(os, src.empty() ? *mt[k] : src.at(k));
    }
    detail::write_param_tensors(os, tp.best);
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
  save_checkpoint(os, ck);
  if (!os.flush()) throw CheckpointError("write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(std::istream& is) {
  Checkpoint ck;
  try {
    if (!bin::read_magic(is, kCheckpointMagic)) throw CheckpointError("not a checkpoint file (bad magic)");
    const std::uint32_t version = bin::read_u32(is);
    if (version != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t variant = bin::read_u32(is);
    const std::uint32_t mode = bin::read_u32(is);
    if (variant > 1) throw CheckpointError("unknown model variant " + std::to_string(variant));
    if (mode > 2) throw CheckpointError("unknown training mode " + std::to_string(mode));
    ModelDims dims;
    dims.d = bin::read_u32(is);
    dims.h = bin::read_u32(is);
    dims.h_d = bin::read_u32(is);
    if (dims.d == 0 || dims.h == 0 || dims.h_d == 0) throw CheckpointError("zero model dimension");
    if (bin::read_u32(is) != InsetParams::kTensorCount) throw CheckpointError("unexpected tensor count");
    ck.mode = TrainMode(mode);
    ck.params = InsetParams::zeros(dims, ModelVariant(variant));
    detail::read_param_tensors(is, ck.params);
    const std::uint32_t has = bin::read_u32(is);
    if (has > 1) throw CheckpointError("corrupt progress flag");
    if (has == 1) {
      TrainProgress tp;
      tp.adam.step = bin::read_u64(is);
      tp.adam.hyper.lr = bin::read_f64(is);
      tp.adam.hyper.beta1 = bin::read_f64(is);
      tp.adam.hyper.beta2 = bin::read_f64(is);
      tp.adam.hyper.eps = bin::read_f64(is);
      tp.adam.hyper.weight_decay = bin::read_f64(is);
      tp.next_epoch = bin::read_u32(is);
      tp.best_epoch = bin::read_u32(is);
      tp.stale_epochs = bin::read_u32(is);
      tp.best_val = bin::read_f64(is);
      for (int which = 0; which < 2; ++which) {
        auto& dst = which == 0 ? tp.adam.m : tp.adam.v;
        for (std::size_t k = 0; k < InsetParams::kTensorCount; ++k) {
          const auto s = InsetParams::expected_shape(dims, k);
          dst.push_back(detail::read_tensor(is, s[0], s[1], InsetParams::kNames[k]));
        }
      }
      tp.best = InsetParams::zeros(dims, ModelVariant(variant));
      detail::read_param_tensors(is, tp.best);
      ck.progress = std::move(tp);
    }
  } catch (const bin::Truncated&) {
    throw CheckpointError("truncated checkpoint");
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(is);
}

}  // namespace inset
