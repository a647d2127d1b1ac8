#include "nis/block.hpp"

#include <algorithm>
#include <cassert>

#include "nis/rng.hpp"

namespace nis {

void create_skip_links(BlockGroup& g) {
  Rng rng(g.seed);
  const std::uint32_t gamma_n = static_cast<std::uint32_t>(g.params.gamma.size());
  const std::size_t count = g.blocks.size();
  for (std::size_t j = 0; j < count; ++j) {
    std::uint16_t mask = 0;
    for (std::uint32_t d = 1; d <= gamma_n; ++d) {
      if (j + (std::size_t(1) << d) >= count) continue;  // target must exist
      if (rng.next_bernoulli(g.params.gamma[d - 1])) mask |= std::uint16_t(1u << d);
    }
    g.blocks[j].link_mask = mask;
  }
}

namespace {

int first_nonempty(const BlockGroup& g, std::size_t from) {
  for (std::size_t i = from; i < g.blocks.size(); ++i)
    if (!g.blocks[i].empty_block()) return static_cast<int>(i);
  return -1;
}

}  // namespace

WalkResult skip_list_search(const BlockGroup& g, Key k,
                            std::vector<std::uint64_t>* visit_log) {
  WalkResult r;
  int cur = first_nonempty(g, 0);
  if (cur < 0) return r;  // nothing to land on

  const std::uint32_t gamma_n = static_cast<std::uint32_t>(g.params.gamma.size());
  const std::size_t count = g.blocks.size();
  r.visits = 1;
  if (visit_log) visit_log->push_back(g.blocks[cur].id);

  for (;;) {
    const IndexBlock& b = g.blocks[cur];
    if (b.eff_contains(k)) break;
    if (b.eff_lo() > k) break;  // k precedes everything we could land on

    // longest admissible skip link first: target must be non-empty and not
    // overshoot (its smallest key must not exceed k)
    int next = -1;
    for (int d = static_cast<int>(gamma_n); d >= 1; --d) {
      std::size_t t = cur + (std::size_t(1) << d);
      if (t >= count || !b.has_link(static_cast<std::uint32_t>(d))) continue;
      const IndexBlock& tb = g.blocks[t];
      if (!tb.empty_block() && tb.eff_lo() <= k) {
        next = static_cast<int>(t);
        break;
      }
    }
    if (next < 0) {
      int s = first_nonempty(g, cur + 1);
      if (s < 0 || g.blocks[s].eff_lo() > k) break;  // cur has the largest max below k
      next = s;
    }
    cur = next;
    ++r.visits;
    if (visit_log) visit_log->push_back(g.blocks[cur].id);
  }
  r.idx = cur;
  return r;
}

std::size_t find_block_logical(const BlockGroup& g, Key k) {
  // logical ranges are sorted and partition the group range
  std::size_t lo = 0, hi = g.blocks.size();
  while (lo + 1 < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (g.blocks[mid].range.lo <= k)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

std::size_t entry_lower_bound(const IndexBlock& b, Key k) {
  auto it = std::lower_bound(b.entries.begin(), b.entries.end(), k,
                             [](const auto& e, Key key) { return e.first < key; });
  return static_cast<std::size_t>(it - b.entries.begin());
}

std::uint32_t ordered_child_slot(const IndexBlock& b, std::uint32_t x, Key k) {
  return slice_index(b.range, x, k);
}

bool block_insert_entry(IndexBlock& b, Key k, Offset o) {
  std::size_t i = entry_lower_bound(b, k);
  if (i < b.entries.size() && b.entries[i].first == k) {
    auto& offs = b.entries[i].second;
    offs.insert(std::upper_bound(offs.begin(), offs.end(), o), o);
    b.observe(k);
    return false;
  }
  b.entries.insert(b.entries.begin() + i, {k, std::vector<Offset>{o}});
  b.observe(k);
  return true;
}

bool block_erase_entry(IndexBlock& b, Key k) {
  std::size_t i = entry_lower_bound(b, k);
  if (i >= b.entries.size() || b.entries[i].first != k) return false;
  b.entries.erase(b.entries.begin() + i);
  if (b.entries.empty()) {
    b.has_obs = false;
  } else {
    // shrink observed boundary to the next remaining extreme
    if (k == b.obs_min) b.obs_min = b.entries.front().first;
    if (k == b.obs_max) b.obs_max = b.entries.back().first;
  }
  return true;
}

void split_block(BlockGroup& g, std::size_t idx, std::uint32_t m) {
  if (idx >= g.blocks.size()) throw std::logic_error("split_block: bad index");
  IndexBlock& b = g.blocks[idx];
  if (!b.bottom()) throw std::logic_error("split_block: block is not bottom-level");
  if (!(double(b.entries.size()) > g.params.alpha * m))
    throw std::logic_error("split_block: block does not exceed alpha*m keys");

  const std::size_t n = b.entries.size();
  const std::size_t left_n = (n + 1) / 2;  // lower half takes the odd one

  IndexBlock right;
  right.id = derive_seed(b.id, ++b.split_seq);
  right.level = b.level;
  right.entries.assign(std::make_move_iterator(b.entries.begin() + left_n),
                       std::make_move_iterator(b.entries.end()));
  b.entries.resize(left_n);

  // logical split point: the upper half's smallest key, clamped so expanded
  // keys (outside the block's logical range) cannot break the partition
  Key boundary = right.entries.front().first;
  if (boundary < b.range.lo) boundary = b.range.lo;
  if (boundary > b.range.hi) boundary = b.range.hi;
  right.range = {boundary, b.range.hi};
  b.range.hi = boundary;

  right.obs_min = right.entries.front().first;
  right.obs_max = right.entries.back().first;
  right.has_obs = true;
  b.obs_min = b.entries.front().first;
  b.obs_max = b.entries.back().first;
  b.has_obs = true;

  g.blocks.insert(g.blocks.begin() + idx + 1, std::move(right));
  create_skip_links(g);
}

bool merge_blocks(BlockGroup& g, std::size_t idx, std::uint32_t m) {
  if (idx + 1 >= g.blocks.size()) return false;
  IndexBlock& a = g.blocks[idx];
  IndexBlock& b = g.blocks[idx + 1];
  if (!a.bottom() || !b.bottom()) return false;
  const double limit = g.params.beta * m;
  if (!(double(a.entries.size()) < limit && double(b.entries.size()) < limit)) return false;

  a.entries.insert(a.entries.end(), std::make_move_iterator(b.entries.begin()),
                   std::make_move_iterator(b.entries.end()));
  a.range.hi = b.range.hi;
  if (b.has_obs) {
    if (a.has_obs) {
      a.obs_min = std::min(a.obs_min, b.obs_min);
      a.obs_max = std::max(a.obs_max, b.obs_max);
    } else {
      a.obs_min = b.obs_min;
      a.obs_max = b.obs_max;
      a.has_obs = true;
    }
  }
  g.blocks.erase(g.blocks.begin() + idx + 1);
  create_skip_links(g);
  return true;
}

std::size_t expand_range(BlockGroup& g, Key k) {
  // the walk depends on non-empty blocks staying ordered by observed range,
  // so the host must come from the gap around k: locate the non-empty
  // neighbours first
  int prev = -1, next = -1;
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    const IndexBlock& b = g.blocks[i];
    if (b.eff_contains(k)) throw std::logic_error("expand_range: a block already covers k");
    if (b.empty_block()) continue;
    if (b.obs_max < k) prev = static_cast<int>(i);
    if (next < 0 && b.obs_min > k) next = static_cast<int>(i);
  }
  if (g.blocks.empty()) throw std::logic_error("expand_range: group has no blocks");

  // an empty block between the neighbours absorbs k without disturbing the
  // order; among those the one nearest by logical range wins, ties keep the
  // lower index
  const std::size_t from = prev < 0 ? 0 : static_cast<std::size_t>(prev) + 1;
  const std::size_t to = next < 0 ? g.blocks.size() : static_cast<std::size_t>(next);
  int best = -1;
  std::uint64_t best_d = 0;
  for (std::size_t i = from; i < to; ++i) {
    const IndexBlock& b = g.blocks[i];
    if (!b.empty_block()) continue;
    std::uint64_t d;
    if (b.range.empty())
      d = UINT64_MAX;  // degenerate zero-width slice, last resort
    else if (b.range.contains(k))
      d = 0;
    else if (k < b.range.lo)
      d = b.range.lo - k;
    else
      d = k - (b.range.hi - 1);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  if (best >= 0) {
    IndexBlock& b = g.blocks[best];
    b.obs_min = b.obs_max = k;
    b.has_obs = true;
    return static_cast<std::size_t>(best);
  }

  // no empty block in the gap: the nearer non-empty neighbour stretches,
  // ties keep the lower index
  std::size_t host;
  if (prev < 0)
    host = static_cast<std::size_t>(next);
  else if (next < 0)
    host = static_cast<std::size_t>(prev);
  else {
    std::uint64_t dp = k - g.blocks[prev].obs_max;
    std::uint64_t dn = g.blocks[next].obs_min - k;
    host = dp <= dn ? static_cast<std::size_t>(prev) : static_cast<std::size_t>(next);
  }
  g.blocks[host].observe(k);
  return host;
}

std::vector<std::string> check_group_invariants(const BlockGroup& g, std::uint32_t m) {
  std::vector<std::string> bad;
  auto fail = [&](std::string s) { bad.push_back(g.path + ": " + std::move(s)); };

  if (g.blocks.empty()) fail("group has no blocks");
  const std::uint32_t gamma_n = static_cast<std::uint32_t>(g.params.gamma.size());

  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    const IndexBlock& b = g.blocks[i];
    if (b.entries.size() > m) fail("block entry count exceeds m");
    if (!b.bottom() && !b.entries.empty()) fail("interior block holds entries");
    if (!b.bottom() && b.children.size() != g.params.x)
      fail("interior block child count != x");
    if (b.range.lo > b.range.hi) fail("inverted logical range");
    if (i + 1 < g.blocks.size() && g.blocks[i + 1].range.lo != b.range.hi)
      fail("block ranges are not consecutive");
    if (b.has_obs) {
      if (b.obs_min > b.obs_max) fail("inverted observed range");
      if (b.bottom() && !b.entries.empty()) {
        if (b.obs_min != b.entries.front().first || b.obs_max != b.entries.back().first)
          fail("observed bounds disagree with stored keys");
      }
    } else if (b.bottom() && !b.entries.empty()) {
      fail("block with entries marked empty");
    }
    for (std::uint32_t d = 1; d < 16; ++d) {
      if (!b.has_link(d)) continue;
      if (d > gamma_n) fail("skip link distance beyond gamma range");
      if (i + (std::size_t(1) << d) >= g.blocks.size())
        fail("skip link target out of bounds");
    }
    for (std::size_t e = 1; e < b.entries.size(); ++e)
      if (!(b.entries[e - 1].first < b.entries[e].first)) fail("entries out of order");
    for (const auto& ent : b.entries)
      if (!std::is_sorted(ent.second.begin(), ent.second.end()))
        fail("offset list not sorted");
  }
  if (!g.blocks.empty()) {
    if (g.blocks.front().range.lo != g.range.lo || g.blocks.back().range.hi != g.range.hi)
      fail("blocks do not span the group range");
  }
  // queries walk forward over observed ranges, so across the group's
  // non-empty blocks those must stay disjoint and ascending by index
  int last_obs = -1;
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    if (!g.blocks[i].has_obs) continue;
    if (last_obs >= 0 && g.blocks[last_obs].obs_max >= g.blocks[i].obs_min)
      fail("observed ranges overlap or are out of order");
    last_obs = static_cast<int>(i);
  }
  return bad;
}

}  // namespace nis
