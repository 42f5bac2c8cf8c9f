#include "wildsam/rng.hpp"

#include <cmath>
#include <numbers>

namespace wildsam {

double Rng::normal() {
  // u1 in (0,1] to keep log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t hash_name(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng derive_rng(uint64_t seed, const std::string& name) {
  Rng mix(seed ^ hash_name(name));
  // One warm-up draw decorrelates nearby seeds.
  mix.next_u64();
  return mix;
}

Tensor randn(Shape shape, Rng& rng, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace wildsam
