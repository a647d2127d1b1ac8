#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nis/bloom.hpp"
#include "nis/types.hpp"

namespace nis {

struct BlockGroup;

// One index block. Blocks of a group partition the group's range into sorted,
// non-intersecting sub-ranges. Only bottom blocks store entries; interior
// blocks route to their x child groups (by sub-range when ordered, by hash
// when unordered). Bottom storage is a sorted (key -> offset multiset) array
// for both kinds; the kind only changes routing and bloom behaviour.
struct IndexBlock {
  std::uint64_t id = 0;
  std::uint32_t level = 0;   // depth from root, root group blocks = 0
  KeyRange range;            // logical half-open range, fixed at build/split time

  // observed inclusive bounds; absent means no key was ever routed here
  Key obs_min = 0;
  Key obs_max = 0;
  bool has_obs = false;

  std::uint16_t link_mask = 0;   // bit d set -> skip link to index + 2^d
  std::uint32_t split_seq = 0;   // splits so far; feeds derived child ids

  std::vector<std::pair<Key, std::vector<Offset>>> entries;  // bottom only
  std::vector<std::unique_ptr<BlockGroup>> children;         // interior only
  std::unique_ptr<BloomFilter> bloom;  // unordered interior only

  bool bottom() const { return children.empty(); }
  bool empty_block() const { return !has_obs; }

  Key eff_lo() const { return has_obs ? obs_min : range.lo; }
  Key eff_hi() const { return has_obs ? obs_max : (range.hi == 0 ? 0 : range.hi - 1); }
  bool eff_contains(Key k) const { return has_obs && k >= obs_min && k <= obs_max; }

  void observe(Key k) {
    if (!has_obs) {
      obs_min = obs_max = k;
      has_obs = true;
    } else {
      if (k < obs_min) obs_min = k;
      if (k > obs_max) obs_max = k;
    }
  }

  std::uint64_t key_count() const { return entries.size(); }
  bool has_link(std::uint32_t d) const { return (link_mask >> d) & 1u; }
};

// y sibling blocks sharing one set of hyper-parameters. The seed is owned by
// the group so skip links can be re-sampled identically after splits/merges.
struct BlockGroup {
  std::string path;  // "0", "0/5", ... child index = block_idx * x + slot
  KeyRange range;
  HyperParams params;
  std::uint64_t seed = 0;
  double est_keys = 0.0;  // build-time estimate of keys routed here
  std::uint32_t level = 0;
  std::vector<IndexBlock> blocks;

  bool is_bottom() const {
    for (const auto& b : blocks)
      if (!b.bottom()) return false;
    return true;
  }
};

struct WalkResult {
  int idx = -1;             // landing block, -1 only for an all-empty group
  std::uint32_t visits = 0; // blocks touched, >= 1 unless group is all-empty
};

// Re-sample every skip link of the group from its seed: block j links to
// j + 2^d with probability gamma[d-1], target must exist. Deterministic for a
// fixed (seed, block count, gamma).
void create_skip_links(BlockGroup& g);

// Skip-list walk over effective (observed) ranges; empty blocks are skipped.
// Returns the block containing k, or the block with the largest observed max
// below k, or the first non-empty block when k precedes everything.
// Each landed-on block counts one visit and is appended to visit_log if given.
WalkResult skip_list_search(const BlockGroup& g, Key k,
                            std::vector<std::uint64_t>* visit_log = nullptr);

// Pre-finalize routing: logical ranges partition the group range, so the
// containing block can be found by binary search. Same answer a walk over
// logical ranges would give, without the per-key walking cost.
std::size_t find_block_logical(const BlockGroup& g, Key k);

// First entry index with entries[i].key >= k (may equal entries.size()).
std::size_t entry_lower_bound(const IndexBlock& b, Key k);

// Child slot of an interior ordered block: index of the even sub-range slice
// of the block's logical range that contains k.
std::uint32_t ordered_child_slot(const IndexBlock& b, std::uint32_t x, Key k);

// insert offset for key (sorted multiset append); returns true if key is new
bool block_insert_entry(IndexBlock& b, Key k, Offset o);

// remove key entirely; returns false if absent
bool block_erase_entry(IndexBlock& b, Key k);

// Split the bottom block at idx into two: lower half keeps ceil(n/2) keys.
// The logical boundary is the upper half's smallest key. Skip links of the
// group are re-sampled. The new block's id is derived from the split block's
// id and split count, so ids do not depend on any global mutation order.
// Throws std::logic_error if preconditions are unmet (bottom block holding
// more than alpha*m keys).
void split_block(BlockGroup& g, std::size_t idx, std::uint32_t m);

// Merge bottom blocks idx and idx+1 when both hold fewer than beta*m keys.
// Returns false (refusal) when preconditions are unmet, true on merge.
bool merge_blocks(BlockGroup& g, std::size_t idx, std::uint32_t m);

// Pick the host block for a key no block's effective range covers. Walks
// require non-empty blocks to stay ordered by observed range, so the host
// comes from the gap around k: the nearest (by logical range) empty block
// between the non-empty neighbours if one exists, else the nearer neighbour,
// ties to the lower index. The host's observed range is expanded to cover k.
std::size_t expand_range(BlockGroup& g, Key k);

// Structural invariant check used by property tests; returns human-readable
// violations (empty == healthy).
std::vector<std::string> check_group_invariants(const BlockGroup& g, std::uint32_t m);

}  // namespace nis
