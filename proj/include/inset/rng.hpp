#pragma once

#include <cstdint>
#include <random>

namespace inset {

using Rng = std::mt19937_64;

/// Named sub-streams derived from the single user seed.
enum class Stream : std::uint32_t {
  Data = 1,
  Init = 2,
  Sampling = 3,
  Batch = 4,
  Split = 5,
  Eval = 6,
  Random = 7,
};

/// Independent generator for (seed, stream, index). Used e.g. with index = sample
/// position so per-sample draws do not depend on scheduling.
inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(index), std::uint32_t(index >> 32)};
  return Rng(seq);
}

/// Uniform double in [0, 1) from 53 random bits. Avoids the
/// implementation-defined std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace inset
