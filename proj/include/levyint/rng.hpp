#pragma once

// Seeded random streams. One master seed; replica i draws from a Mersenne
// Twister seeded with an avalanche mix of (seed, i), so results depend only on
// (seed, replica index) and never on scheduling.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace levyint {

/// splitmix64 finalizer; full avalanche on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the stream used by replica `index` under master seed `master`.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(master ^ mix64(index ^ 0x6a09e667f3bcc909ULL));
}

class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::uint64_t index) : engine_(stream_seed(master, index)) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unit-mean exponential.
  double exponential() { return -std::log(uniform()); }

  double normal() { return normal_(engine_); }

  double gamma(double shape) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(engine_);
  }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace levyint
