#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nis/types.hpp"

namespace nis {

// Dataset statistics handed to the controller and the build layer-stop rule:
// min/max, unique count, and a 32-bin equi-width histogram over [min, max].
struct DatasetStats {
  static constexpr std::uint32_t kBins = 32;

  std::uint64_t n = 0;
  std::uint64_t unique_count = 0;
  Key min_key = 0;
  Key max_key = 0;
  std::vector<std::uint64_t> histogram;  // kBins counts, sums to n

  double bin_width() const {
    if (n == 0) return 1.0;
    return (double(max_key) - double(min_key) + 1.0) / kBins;
  }

  // estimated number of keys in [r.lo, r.hi) by fractional bin overlap
  double range_mass(const KeyRange& r) const;

  // key domain the root group covers: [min, max+1)
  KeyRange root_range() const {
    if (n == 0) return {0, 1};
    return {min_key, max_key == kMaxUsableKey + 1 ? UINT64_MAX : max_key + 1};
  }
};

DatasetStats compute_stats(std::span<const Key> keys);

// Controller input encoding: min, max and uniqueCount as 64-bit binary
// vectors, each histogram count log-scaled and quantized to 8 bits.
// 3*64 + 32*8 = 448 zero/one doubles.
constexpr std::size_t kControllerInputBits = 448;
std::vector<double> encode_controller_input(const DatasetStats& s);

// Empirical histogram of arbitrary values over a key range, re-binned to
// `bins` buckets and normalized to sum 1 (all-zero when nothing overlaps).
// Used for the cost predictor's per-block data/query features.
std::vector<double> normalized_range_histogram(const DatasetStats& s, const KeyRange& r,
                                               std::uint32_t bins);

}  // namespace nis
