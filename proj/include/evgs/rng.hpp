#pragma once

#include <cstdint>
#include <string_view>

namespace evgs {

/// Deterministic generator (SplitMix64 core). All draws are produced from
/// fixed-width integer arithmetic so sequences are identical across platforms,
/// unlike the std:: distribution adapters.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (two fresh uniforms per call).
  double normal();

  /// Uniform integer in [0, n); n must be >= 1.
  uint64_t uniform_index(uint64_t n);

 private:
  uint64_t state_;
};

/// Derives an independent substream from a root seed, a module label, and a
/// counter. Every consumer of randomness gets its own named stream so adding a
/// draw in one module never shifts another module's sequence.
Rng substream(uint64_t seed, std::string_view stream_id, uint64_t counter = 0);

}  // namespace evgs
