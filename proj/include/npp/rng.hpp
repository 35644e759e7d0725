#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace npp {

// mt19937_64 with hand-rolled draw helpers. The std distributions are not
// bit-stable across standard libraries; these are, which byte-identical
// reproducibility requires.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is below 2^-40 for any n under
  // 2^24, which covers every pixel-index use here.
  uint64_t index(uint64_t n) { return gen_() % n; }

  // Box-Muller, one value per call (the spare is discarded to keep the
  // draw count independent of call pairing).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 gen_;
};

// Stateless per-key hash, for quantities that must not depend on draw order
// (per-tile jitter, derived seeds). SplitMix64 finalizer.
inline uint64_t hash_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) { return hash_mix(a ^ hash_mix(b)); }

// Uniform in [0,1) derived from a hash key.
inline double hash_uniform(uint64_t key) { return double(hash_mix(key) >> 11) * 0x1.0p-53; }

}  // namespace npp
