#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rldet {

// Deterministic splitmix64 generator. Hand-rolled so that streams are
// reproducible byte-for-byte across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  double normal(double mean = 0.0, double sigma = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + sigma * r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    // Knuth for small lambda; normal approximation above 64 keeps this O(1).
    if (lambda > 64.0) {
      const int k = static_cast<int>(std::lround(normal(lambda, std::sqrt(lambda))));
      return k < 0 ? 0 : k;
    }
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Derives an independent substream; used for per-frame seeds.
  static uint64_t derive(uint64_t base, uint64_t index) {
    Rng r(base ^ (0xd1b54a32d192ed03ULL * (index + 1)));
    return r.next_u64();
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rldet
