#pragma once

#include <cstdint>
#include <string>

#include "wildsam/tensor.hpp"

// Self-contained deterministic RNG. Uses splitmix64 so that streams are
// bit-reproducible across platforms and standard libraries.

namespace wildsam {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one value per call, no caching, so the
  // stream position is a pure function of call count).
  double normal();

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

 private:
  uint64_t state_;
};

// Stable 64-bit hash for deriving per-name parameter seeds.
uint64_t hash_name(const std::string& s);

// Derives an independent stream from (seed, name).
Rng derive_rng(uint64_t seed, const std::string& name);

Tensor randn(Shape shape, Rng& rng, double stddev);

}  // namespace wildsam
