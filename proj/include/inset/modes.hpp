#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace inset {

/// INSET pools both the subset and the full ground set; DEEPSETS_ONLY drops the
/// ground-set branch in both the energy network and EquiNet.
enum class ModelVariant : std::uint32_t { Inset = 0, DeepSetsOnly = 1 };

enum class TrainMode : std::uint32_t {
  Exact = 0,        // enumerated EBM likelihood
  Variational = 1,  // mean-field fixed point + MC marginal gains, BCE
  Direct = 2,       // EquiNet BCE, no energy
};

inline std::string to_string(ModelVariant v) {
  return v == ModelVariant::Inset ? "inset" : "deepsets";
}

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Exact: return "exact";
    case TrainMode::Variational: return "variational";
    case TrainMode::Direct: return "direct";
  }
  return "?";
}

inline ModelVariant parse_variant(std::string_view s) {
  if (s == "inset") return ModelVariant::Inset;
  if (s == "deepsets" || s == "deepsets-only" || s == "deepsets_only") return ModelVariant::DeepSetsOnly;
  throw std::invalid_argument("unknown model variant '" + std::string(s) + "' (inset|deepsets)");
}

inline TrainMode parse_mode(std::string_view s) {
  if (s == "exact") return TrainMode::Exact;
  if (s == "variational") return TrainMode::Variational;
  if (s == "direct") return TrainMode::Direct;
  throw std::invalid_argument("unknown training mode '" + std::string(s) +
                              "' (exact|variational|direct)");
}

}  // namespace inset
