#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ctlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seeded random source. Every stochastic routine takes one of these
/// explicitly; nothing in the library touches global RNG state.
///
/// child(i) derives an independent stream from (seed, i), so parallel
/// workers can draw without coordination and results stay reproducible
/// regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  Rng child(std::uint64_t index) const {
    return Rng(splitmix64(seed_ + 0x9e3779b97f4a7c15ull * (index + 1)));
  }

  /// Uniform double in (0, 1].
  double uniform() {
    ++draw_count_;
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. One independent value per call; no
  /// cached spare, so the draw count maps 1:1 to calls.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() <= p; }

  /// Uniform integer in [0, n) via multiply-shift; n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    ++draw_count_;
    const auto x = engine_();
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(x) * n) >> 64);
  }

  long long poisson(double lambda) {
    ++draw_count_;
    std::poisson_distribution<long long> dist(lambda);
    return dist(engine_);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draw_count() const { return draw_count_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t draw_count_ = 0;
};

}  // namespace ctlab
