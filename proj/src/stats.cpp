#include "nis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace nis {

DatasetStats compute_stats(std::span<const Key> keys) {
  DatasetStats s;
  s.histogram.assign(DatasetStats::kBins, 0);
  s.n = keys.size();
  if (keys.empty()) return s;

  s.min_key = keys[0];
  s.max_key = keys[0];
  for (Key k : keys) {
    if (k > kMaxUsableKey) throw std::invalid_argument("keys must be < 2^64-1");
    s.min_key = std::min(s.min_key, k);
    s.max_key = std::max(s.max_key, k);
  }

  const double w = s.bin_width();
  for (Key k : keys) {
    auto b = static_cast<std::uint32_t>((double(k) - double(s.min_key)) / w);
    if (b >= DatasetStats::kBins) b = DatasetStats::kBins - 1;
    ++s.histogram[b];
  }

  std::unordered_set<Key> uniq(keys.begin(), keys.end());
  s.unique_count = uniq.size();
  return s;
}

double DatasetStats::range_mass(const KeyRange& r) const {
  if (n == 0 || r.empty()) return 0.0;
  const double w = bin_width();
  const double lo = double(r.lo), hi = double(r.hi);
  double mass = 0.0;
  for (std::uint32_t b = 0; b < kBins; ++b) {
    if (histogram[b] == 0) continue;
    double blo = double(min_key) + w * b;
    double bhi = blo + w;
    double ov = std::min(hi, bhi) - std::max(lo, blo);
    if (ov <= 0) continue;
    mass += double(histogram[b]) * (ov / w);
  }
  return mass;
}

namespace {

void append_u64_bits(std::vector<double>& out, std::uint64_t v) {
  for (int i = 63; i >= 0; --i) out.push_back(double((v >> i) & 1));
}

}  // namespace

std::vector<double> encode_controller_input(const DatasetStats& s) {
  std::vector<double> out;
  out.reserve(kControllerInputBits);
  append_u64_bits(out, s.min_key);
  append_u64_bits(out, s.max_key);
  append_u64_bits(out, s.unique_count);

  std::uint64_t max_count = 0;
  for (auto c : s.histogram) max_count = std::max(max_count, c);
  const double denom = max_count > 0 ? std::log1p(double(max_count)) : 1.0;
  for (auto c : s.histogram) {
    auto q = static_cast<std::uint32_t>(
        std::lround(255.0 * (c > 0 ? std::log1p(double(c)) / denom : 0.0)));
    if (q > 255) q = 255;
    for (int i = 7; i >= 0; --i) out.push_back(double((q >> i) & 1));
  }
  return out;
}

std::vector<double> normalized_range_histogram(const DatasetStats& s, const KeyRange& r,
                                               std::uint32_t bins) {
  std::vector<double> out(bins, 0.0);
  if (s.n == 0 || r.empty() || bins == 0) return out;
  double total = 0.0;
  for (std::uint32_t i = 0; i < bins; ++i) {
    KeyRange sub = range_slice(r, bins, i);
    out[i] = s.range_mass(sub);
    total += out[i];
  }
  if (total > 0)
    for (auto& v : out) v /= total;
  return out;
}

}  // namespace nis
