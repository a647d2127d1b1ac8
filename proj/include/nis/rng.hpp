#pragma once

#include <cstdint>
#include <cmath>

namespace nis {

// SplitMix64. Chosen over std::mt19937_64 + std::*_distribution because the
// standard does not pin distribution algorithms, and we need bit-identical
// streams for a fixed seed everywhere (determinism is part of the contract).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1), 53-bit resolution
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [0,n); multiply-shift mapping (bias < n/2^64, irrelevant here)
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Box-Muller; one draw per call, cached pair intentionally omitted to keep
  // the stream position a pure function of call count.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

// Deterministic sub-stream derivation: mixes the tuple into a fresh seed so
// parallel consumers (per candidate, per chunk, per group) never share state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  Rng r(base ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL));
  r.next_u64();
  return r.next_u64();
}

}  // namespace nis
