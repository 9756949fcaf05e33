#pragma once

#include <cstdint>
#include <cmath>

namespace mgt {

inline constexpr double kPi = 3.14159265358979323846;

// splitmix64 stream. The standard <random> distributions are not
// bit-reproducible across library implementations, so every place that
// needs randomness (init, shuffles, dropout masks, synthetic data) goes
// through this generator instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1) with 53 random bits
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // uniform integer in [0, n); modulo bias is irrelevant at our scales
  uint64_t below(uint64_t n) { return next_u64() % n; }

  double normal() {
    double u1 = u01();
    while (u1 <= 0.0) u1 = u01();
    double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Mixes two words into a fresh seed (e.g. base seed + epoch index).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  Rng r(a ^ (b * 0x9E3779B97F4A7C15ull + 0x165667B19E3779F9ull));
  return r.next_u64();
}

}  // namespace mgt
