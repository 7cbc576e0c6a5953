#pragma once
#include <cmath>
#include <cstdint>
#include <random>

// Deterministic random-number layer. The exact draw sequence is part of the
// external interface: generated datasets must be reproducible bit-for-bit
// from a seed across platforms and worker counts. std::mt19937_64 has a
// standard-pinned output sequence; the transforms below are pinned here
// because the standard-library distributions are implementation-defined.
namespace lre {

// SplitMix64 output function; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, k1, k2). Used to split the
// master seed into per-cell, per-replication, and per-site streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k1,
                                 std::uint64_t k2) {
  std::uint64_t h = mix64(seed ^ mix64(k1 * 0x9E3779B97F4A7C15ull));
  return mix64(h ^ mix64(k2 * 0xC2B2AE3D27D4EB4Full));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call
  // (no caching, so the draw count per call is fixed).
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Integer uniform on {lo, ..., hi}; u < 1 guarantees the result <= hi.
  long uniform_int(long lo, long hi) {
    const double span = static_cast<double>(hi - lo + 1);
    long v = lo + static_cast<long>(uniform() * span);
    return v > hi ? hi : v;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lre
