#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wsloc {

/// Seeded generator with fixed transforms so that streams are reproducible
/// independent of the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (two draws per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Integer in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  /// Integer in [lo, hi] inclusive.
  std::size_t range(std::size_t lo, std::size_t hi) {
    return lo + index(hi - lo + 1);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace wsloc
