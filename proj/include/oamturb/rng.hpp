#pragma once

#include <cstdint>

// Counter-based random streams for reproducible Monte Carlo: every trial gets
// its own generator derived from (seed, trial index), so results are
// identical no matter how trials are batched or parallelized.

namespace oamturb {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

inline SplitMix64 substream(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64(mix64(seed ^ mix64(index + 0x9E3779B97F4A7C15ull)));
}

}  // namespace oamturb
