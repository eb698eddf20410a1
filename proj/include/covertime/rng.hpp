#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace covertime {

// Stream identifiers keep independent sources of randomness decorrelated
// within one (seed, replica) pair.
enum class RngUse : std::uint64_t {
  walk = 1,
  field = 2,
  field_prime = 3,
  compound = 4,
  bridge = 5,
  generic = 6,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Reproducible random stream keyed by (seed, use, replica). All transforms
// are implemented here rather than with std:: distributions so that two
// independently written simulators consuming the same stream produce
// bit-identical trajectories.
class RngStream {
 public:
  RngStream(std::uint64_t seed, RngUse use, std::uint64_t replica)
      : gen_(mix(seed, static_cast<std::uint64_t>(use), replica)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on (0, 1]; never returns 0, so -log(u) is always finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Index uniform on {0, ..., n-1} via the 128-bit multiply-shift map.
  std::uint32_t uniform_below(std::uint32_t n) {
    return static_cast<std::uint32_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Box-Muller pair, one value cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * M_PI * uniform();
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t poisson(double mu) {
    std::uint64_t total = 0;
    while (mu > 32.0) {  // split to keep the product method in range
      total += poisson_small(mu / 2.0);
      mu /= 2.0;
    }
    return total + poisson_small(mu);
  }

  // Geometric on {1, 2, ...} with success probability q.
  std::uint64_t geometric_from_one(double q) {
    if (q >= 1.0) return 1;
    const double u = uniform();
    return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-q)));
  }

  std::uint64_t binomial(std::uint64_t n, double p) {
    std::uint64_t c = 0;
    for (std::uint64_t i = 0; i < n; ++i) c += (uniform() <= p) ? 1 : 0;
    return c;
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t use,
                           std::uint64_t replica) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= use * 0xda942042e4dd58b5ULL;
    h ^= splitmix64(s);
    s ^= replica * 0x2545f4914f6cdd1dULL;
    h ^= splitmix64(s);
    return h;
  }

  std::uint64_t poisson_small(double mu) {
    const double limit = std::exp(-mu);
    double prod = uniform();
    std::uint64_t k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }

  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace covertime
