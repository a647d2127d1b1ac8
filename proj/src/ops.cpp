#include "nis/ops.hpp"

#include <algorithm>

#include "nis/sha1.hpp"

namespace nis {

namespace {

void require_finalized(const Index& idx, const char* op) {
  if (!idx.finalized)
    throw std::logic_error(std::string(op) + ": index is not finalized");
}

std::uint32_t routed_child_slot(const IndexBlock& b, const HyperParams& hp, Key k) {
  if (hp.block_type == BlockType::Unordered) return hash_route(k, hp.x);
  Key kk = k;  // expanded keys may sit outside the logical slice arithmetic
  if (kk < b.range.lo) kk = b.range.lo;
  if (kk >= b.range.hi) kk = b.range.hi - 1;
  return ordered_child_slot(b, hp.x, kk);
}

}  // namespace

QueryResult lookup(const Index& idx, Key k, std::vector<std::uint64_t>* visit_log) {
  require_finalized(idx, "lookup");
  QueryResult r;
  const BlockGroup* g = &idx.root;
  for (;;) {
    WalkResult w = skip_list_search(*g, k, visit_log);
    r.visited_blocks += w.visits;
    if (w.idx < 0) return r;  // all-empty group
    const IndexBlock& b = g->blocks[w.idx];
    if (!b.eff_contains(k)) return r;
    if (b.bottom()) {
      std::size_t i = entry_lower_bound(b, k);
      if (i < b.entries.size() && b.entries[i].first == k) {
        r.found = true;
        r.offsets = b.entries[i].second;
      }
      return r;
    }
    if (g->params.block_type == BlockType::Unordered) {
      if (!b.bloom || !b.bloom->maybe_contains(k)) {
        r.bloom_rejected = true;
        return r;
      }
    }
    g = b.children[routed_child_slot(b, g->params, k)].get();
  }
}

namespace {

struct RangeCtx {
  Key lo, hi;  // inclusive
  QueryResult* out;
  std::vector<std::uint64_t>* log;
};

void collect_range(const BlockGroup& g, Key lo, Key hi, RangeCtx& ctx) {
  WalkResult w = skip_list_search(g, lo, ctx.log);
  ctx.out->visited_blocks += w.visits;
  if (w.idx < 0) return;

  for (std::size_t j = static_cast<std::size_t>(w.idx); j < g.blocks.size(); ++j) {
    const IndexBlock& b = g.blocks[j];
    if (b.empty_block()) continue;  // skipped, costs nothing
    if (b.eff_lo() > hi) break;
    if (b.eff_hi() < lo) continue;  // only the walk's landing block can be below
    if (j != static_cast<std::size_t>(w.idx)) {
      ++ctx.out->visited_blocks;
      if (ctx.log) ctx.log->push_back(b.id);
    }
    if (b.bottom()) {
      std::size_t i = entry_lower_bound(b, lo);
      for (; i < b.entries.size() && b.entries[i].first <= hi; ++i)
        ctx.out->offsets.insert(ctx.out->offsets.end(), b.entries[i].second.begin(),
                                b.entries[i].second.end());
      continue;
    }
    const HyperParams& hp = g.params;
    if (hp.block_type == BlockType::Ordered) {
      Key clo = std::max(lo, b.range.lo);
      Key chi = std::min(hi, b.range.hi - 1);
      std::uint32_t s0 = clo <= chi ? ordered_child_slot(b, hp.x, clo) : 0;
      std::uint32_t s1 = clo <= chi ? ordered_child_slot(b, hp.x, chi) : 0;
      // expanded keys may live outside the logical slices; widen to be safe
      if (lo < b.range.lo) s0 = 0;
      if (hi >= b.range.hi) s1 = hp.x - 1;
      for (std::uint32_t s = s0; s <= s1; ++s)
        collect_range(*b.children[s], lo, hi, ctx);
    } else {
      for (std::uint32_t s = 0; s < hp.x; ++s)  // order is hashed away
        collect_range(*b.children[s], lo, hi, ctx);
    }
  }
}

}  // namespace

QueryResult range_search(const Index& idx, Key lo, Key hi,
                         std::vector<std::uint64_t>* visit_log) {
  require_finalized(idx, "range_search");
  if (lo > hi) throw std::invalid_argument("range_search: lo > hi");
  QueryResult r;
  RangeCtx ctx{lo, hi, &r, visit_log};
  collect_range(idx.root, lo, hi, ctx);
  std::sort(r.offsets.begin(), r.offsets.end());
  r.found = !r.offsets.empty();
  return r;
}

UpdateResult insert_key(Index& idx, Key k, Offset o,
                        std::vector<std::uint64_t>* visit_log) {
  require_finalized(idx, "insert");
  if (k > kMaxUsableKey) throw std::invalid_argument("insert: key out of domain");
  UpdateResult r;
  r.applied = true;
  BlockGroup* g = &idx.root;
  for (;;) {
    WalkResult w = skip_list_search(*g, k, visit_log);
    r.visited_blocks += w.visits;
    std::size_t bi;
    if (w.idx >= 0 && g->blocks[w.idx].eff_contains(k)) {
      bi = static_cast<std::size_t>(w.idx);
    } else {
      bi = expand_range(*g, k);  // empty blocks first, else nearest boundary
      if (w.idx < 0 || bi != static_cast<std::size_t>(w.idx)) {
        ++r.visited_blocks;
        if (visit_log) visit_log->push_back(g->blocks[bi].id);
      }
    }
    IndexBlock& b = g->blocks[bi];
    b.observe(k);
    if (b.bottom()) {
      if (block_insert_entry(b, k, o)) ++idx.stored_keys;
      if (double(b.entries.size()) > g->params.alpha * idx.cfg.m)
        split_block(*g, bi, idx.cfg.m);
      return r;
    }
    if (g->params.block_type == BlockType::Unordered && b.bloom) b.bloom->add(k);
    g = b.children[routed_child_slot(b, g->params, k)].get();
  }
}

namespace {

// recompute an interior block's observed bounds from its children after a
// boundary key was deleted below it
void refresh_interior_obs(IndexBlock& b) {
  bool any = false;
  Key mn = 0, mx = 0;
  for (const auto& cg : b.children) {
    for (const auto& cb : cg->blocks) {
      if (cb.empty_block()) continue;
      if (!any) {
        mn = cb.obs_min;
        mx = cb.obs_max;
        any = true;
      } else {
        mn = std::min(mn, cb.obs_min);
        mx = std::max(mx, cb.obs_max);
      }
    }
  }
  b.has_obs = any;
  b.obs_min = mn;
  b.obs_max = mx;
}

bool erase_rec(Index& idx, BlockGroup* g, Key k, UpdateResult& r,
               std::vector<std::uint64_t>* log) {
  WalkResult w = skip_list_search(*g, k, log);
  r.visited_blocks += w.visits;
  if (w.idx < 0) return false;
  std::size_t bi = static_cast<std::size_t>(w.idx);
  IndexBlock& b = g->blocks[bi];
  if (!b.eff_contains(k)) return false;

  if (b.bottom()) {
    if (!block_erase_entry(b, k)) return false;
    --idx.stored_keys;
    // underflow handling: merge with the right neighbour first, else left
    if (!merge_blocks(*g, bi, idx.cfg.m) && bi > 0) merge_blocks(*g, bi - 1, idx.cfg.m);
    return true;
  }
  if (g->params.block_type == BlockType::Unordered) {
    if (!b.bloom || !b.bloom->maybe_contains(k)) return false;  // never inserted here
  }
  BlockGroup* child = b.children[routed_child_slot(b, g->params, k)].get();
  bool erased = erase_rec(idx, child, k, r, log);
  if (erased && (k == b.obs_min || k == b.obs_max)) refresh_interior_obs(b);
  return erased;
}

}  // namespace

UpdateResult erase_key(Index& idx, Key k, std::vector<std::uint64_t>* visit_log) {
  require_finalized(idx, "erase");
  UpdateResult r;
  r.applied = erase_rec(idx, &idx.root, k, r, visit_log);
  return r;
}

}  // namespace nis
