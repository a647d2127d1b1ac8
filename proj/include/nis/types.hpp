#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nis {

using Key = std::uint64_t;
using Offset = std::uint64_t;

// Keys equal to 2^64-1 are rejected at load time so that half-open upper
// bounds never overflow.
constexpr Key kMaxUsableKey = UINT64_MAX - 1;

enum class BlockType : std::uint8_t { Ordered = 0, Unordered = 1 };

inline const char* to_string(BlockType t) {
  return t == BlockType::Ordered ? "ordered" : "unordered";
}

inline BlockType block_type_from_string(const std::string& s) {
  if (s == "ordered") return BlockType::Ordered;
  if (s == "unordered") return BlockType::Unordered;
  throw std::invalid_argument("unknown block type: " + s);
}

// Half-open logical range [lo, hi). Observed bounds (inclusive) live on the
// blocks themselves.
struct KeyRange {
  Key lo = 0;
  Key hi = 0;  // exclusive

  bool contains(Key k) const { return k >= lo && k < hi; }
  bool empty() const { return hi <= lo; }
  std::uint64_t width() const { return hi - lo; }
};

// Even partition of [lo,hi) into n floor-sized slices, remainder absorbed by
// the last slice.
inline KeyRange range_slice(const KeyRange& r, std::uint32_t n, std::uint32_t i) {
  if (n == 0 || i >= n) throw std::invalid_argument("range_slice: bad slice index");
  std::uint64_t w = r.width() / n;
  KeyRange s;
  s.lo = r.lo + w * i;
  s.hi = (i + 1 == n) ? r.hi : r.lo + w * (i + 1);
  return s;
}

// Index of the slice containing k, inverse of range_slice.
inline std::uint32_t slice_index(const KeyRange& r, std::uint32_t n, Key k) {
  if (!r.contains(k)) throw std::invalid_argument("slice_index: key outside range");
  std::uint64_t w = r.width() / n;
  if (w == 0) return n - 1;  // degenerate: all keys land in the last slice
  std::uint64_t i = (k - r.lo) / w;
  return i >= n ? n - 1 : static_cast<std::uint32_t>(i);
}

// Per-group hyper-parameters. gamma holds floor(log2(y)) link probabilities,
// gamma[d-1] for links of distance 2^d.
struct HyperParams {
  BlockType block_type = BlockType::Ordered;
  std::uint32_t x = 1;
  std::uint32_t y = 1;
  double alpha = 1.0;
  double beta = 0.5;
  std::vector<double> gamma;

  static std::uint32_t gamma_count(std::uint32_t y) {
    std::uint32_t n = 0;
    while ((2u << n) <= y) ++n;  // floor(log2 y)
    return n;
  }

  void validate(std::uint32_t m) const {
    if (x == 0 || x > m) throw std::invalid_argument("hyperparams: x must be in [1, m]");
    if (y == 0) throw std::invalid_argument("hyperparams: y must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("hyperparams: alpha in (0,1]");
    if (!(beta >= 0.0 && beta < 0.5 + 1e-12))
      throw std::invalid_argument("hyperparams: beta in [0,0.5]");
    if (gamma.size() != gamma_count(y))
      throw std::invalid_argument("hyperparams: gamma needs floor(log2 y) entries");
    for (double g : gamma)
      if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("hyperparams: gamma in [0,1]");
  }
};

// Candidate value sets the controller picks from. Fractions of m for x keep
// the set admissible for any configured block capacity.
struct PredefinedValueSets {
  std::vector<double> x_fractions = {0.25, 0.5, 0.75, 1.0};
  std::vector<std::uint32_t> y_choices = {32, 64, 128, 256};
  std::vector<double> alpha_choices = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> beta_choices = {0.1, 0.2, 0.3, 0.4};

  std::vector<std::uint32_t> x_values(std::uint32_t m) const {
    std::vector<std::uint32_t> out;
    out.reserve(x_fractions.size());
    for (double f : x_fractions) {
      auto v = static_cast<std::uint32_t>(std::llround(f * m));
      out.push_back(v == 0 ? 1 : v);
    }
    return out;
  }

  void validate() const {
    if (x_fractions.empty() || y_choices.empty() || alpha_choices.empty() ||
        beta_choices.empty())
      throw std::invalid_argument("value sets must be non-empty");
  }
};

}  // namespace nis
