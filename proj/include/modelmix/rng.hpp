#pragma once

#include <cmath>
#include <cstdint>

namespace modelmix {

// Deterministic generator with cheap derivation of independent substreams.
// The trainer derives one substream per (iteration, purpose) pair so that
// e.g. disabling the mixing draws leaves the noise draws untouched.
//
// Core is xoshiro256++ seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  // Substream keyed on (master, iteration, stream id). Streams with
  // different keys are statistically independent.
  static Rng substream(std::uint64_t master, std::uint64_t iteration,
                       std::uint64_t stream_id) {
    std::uint64_t x = master;
    std::uint64_t a = splitmix64(x);
    x ^= 0x9e3779b97f4a7c15ULL * (iteration + 1);
    std::uint64_t b = splitmix64(x);
    x ^= 0xbf58476d1ce4e5b9ULL * (stream_id + 1);
    std::uint64_t c = splitmix64(x);
    return Rng(a ^ rotl(b, 17) ^ rotl(c, 41));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller. The second deviate of each pair is
  // discarded so draw counts stay independent of call interleaving.
  double normal() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Zero-mean Laplace with the given scale (1/rate).
  double laplace(double scale) {
    const double u = uniform01() - 0.5;
    const double sign = u < 0.0 ? -1.0 : 1.0;
    return -scale * sign * std::log1p(-2.0 * std::fabs(u));
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
};

}  // namespace modelmix
