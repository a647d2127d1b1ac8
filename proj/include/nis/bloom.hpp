#pragma once

#include <cstdint>
#include <vector>

#include "nis/types.hpp"

namespace nis {

// Bloom filter over keys: 10 bits per expected key, 7 hash functions
// (double hashing). Never updated on delete, so stale positives are possible
// but false negatives are not.
class BloomFilter {
 public:
  static constexpr std::uint32_t kBitsPerKey = 10;
  static constexpr std::uint32_t kNumHashes = 7;

  BloomFilter() = default;
  explicit BloomFilter(std::uint64_t expected_keys) {
    std::uint64_t bits = expected_keys * kBitsPerKey;
    if (bits < 64) bits = 64;
    words_.assign((bits + 63) / 64, 0);
  }

  void add(Key k) {
    auto [h1, h2] = base_hashes(k);
    std::uint64_t nbits = words_.size() * 64;
    for (std::uint32_t i = 0; i < kNumHashes; ++i) {
      std::uint64_t b = (h1 + i * h2) % nbits;
      words_[b >> 6] |= (1ULL << (b & 63));
    }
  }

  bool maybe_contains(Key k) const {
    if (words_.empty()) return false;
    auto [h1, h2] = base_hashes(k);
    std::uint64_t nbits = words_.size() * 64;
    for (std::uint32_t i = 0; i < kNumHashes; ++i) {
      std::uint64_t b = (h1 + i * h2) % nbits;
      if (!(words_[b >> 6] & (1ULL << (b & 63)))) return false;
    }
    return true;
  }

  std::uint64_t bit_count() const { return words_.size() * 64; }
  std::uint64_t byte_count() const { return words_.size() * 8; }

  // expected false positive rate for n keys in this filter
  static double theoretical_fpr(std::uint64_t n, std::uint64_t bits) {
    if (bits == 0) return 1.0;
    double ratio = double(kNumHashes) * double(n) / double(bits);
    double p = 1.0 - std::exp(-ratio);
    double r = 1.0;
    for (std::uint32_t i = 0; i < kNumHashes; ++i) r *= p;
    return r;
  }

 private:
  // two independent 64-bit mixes of the key (not SHA-1: routing and
  // membership must not correlate)
  static std::pair<std::uint64_t, std::uint64_t> base_hashes(Key k) {
    auto mix = [](std::uint64_t z) {
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      return z ^ (z >> 31);
    };
    std::uint64_t h1 = mix(k + 0x9e3779b97f4a7c15ULL);
    std::uint64_t h2 = mix(k ^ 0xc2b2ae3d27d4eb4fULL) | 1;  // odd stride
    return {h1, h2};
  }

  std::vector<std::uint64_t> words_;
};

}  // namespace nis
