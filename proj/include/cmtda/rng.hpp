#pragma once

#include <cstdint>
#include <random>

namespace cmtda {

/// Seeded random source with a platform-independent uniform draw.
///
/// std::uniform_real_distribution is implementation-defined, so the simulator
/// draws from the raw 64-bit engine output to keep runs bit-identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a stream label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace cmtda
