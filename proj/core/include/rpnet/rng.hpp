#ifndef RPNET_RNG_HPP
#define RPNET_RNG_HPP

#include <cmath>
#include <cstdint>

namespace rpnet {

// splitmix64; used to derive stream seeds from (seed, index, ...) tuples so
// workers can draw independent, reproducible streams.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix_seed(mix_seed(a) + b); }

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b) + c);
}

// Deterministic RNG with explicit float mappings. std::mt19937_64 is
// bit-exact everywhere; the distributions below avoid the
// implementation-defined std::*_distribution classes.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix_seed(seed)) {}

  uint64_t next_u64() {
    // xorshift* step on top of the splitmix-initialized state.
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // Uniform in [0, 1) with 24 bits of mantissa.
  float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1p-24f; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Box-Muller; one normal per call, second of the pair cached.
  float normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.28318530717958647692f * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  float cached_ = 0.0f;
  bool have_cached_ = false;
};

}  // namespace rpnet

#endif  // RPNET_RNG_HPP
