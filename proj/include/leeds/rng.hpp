#pragma once

// Deterministic RNG used by every sampling path in the project.
//
// Generator: xoshiro256++ (Blackman & Vigna), seeded through splitmix64.
// Substreams are derived counter-style: from_stream(seed, k) mixes the
// stream index into the seed before expansion, so independent runs and
// parallel workers draw from disjoint, reproducible sequences.
//
// All floating-point sampling (uniform, normal, sphere) is implemented
// here rather than via <random> distributions, whose output is
// implementation-defined; results must be bit-identical across
// platforms and standard libraries.

#include <cmath>
#include <cstdint>
#include <vector>

namespace leeds {

class Rng {
public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto &w : s_) w = splitmix64(x);
  }

  // Counter-seeded substream: distinct stream_id gives an unrelated sequence.
  static Rng from_stream(uint64_t seed, uint64_t stream_id) {
    uint64_t x = seed;
    uint64_t a = splitmix64(x);
    return Rng(a ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1)));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Unbiased integer in [0, n). n must be >= 1.
  uint64_t uniform_index(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller. Stateless across calls (the second
  // coordinate of each pair is discarded) so copies of an Rng stay in
  // lockstep with the original.
  double normal() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> v(n);
    for (auto &x : v) x = normal();
    return v;
  }

  // Uniform point on the sphere of given radius around center.
  std::vector<double> on_sphere(const std::vector<double> &center, double radius) {
    std::vector<double> v;
    double norm = 0.0;
    do {
      v = normal_vec(center.size());
      norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + radius * v[i] / norm;
    return v;
  }

private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t &x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t s_[4];
};

} // namespace leeds
