#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nis/block.hpp"
#include "nis/params.hpp"
#include "nis/stats.hpp"

namespace nis {

struct IndexConfig {
  std::uint32_t m = 256;                       // max keys per block
  std::uint64_t seed = 1;                      // drives group link seeds
  std::uint64_t budget_bytes = 1ull << 30;     // storage budget B
  std::uint32_t max_depth = 8;                 // layer cap: levels 0..max_depth-1
};

struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The index itself. Built in two phases: build_logical produces the block
// skeleton from a ParameterIndex, materialize streams (key, offset) pairs
// into it, finalize flips the query surface on (effective ranges = observed
// bounds, empty blocks skipped).
struct Index {
  IndexConfig cfg;
  DatasetStats stats;        // dataset statistics the shape was derived from
  BlockGroup root;
  bool finalized = false;
  std::uint64_t next_block_id = 1;
  std::uint64_t stored_keys = 0;  // distinct keys currently stored

  Index() = default;
  Index(Index&&) = default;
  Index& operator=(Index&&) = default;
  Index(const Index&) = delete;
  Index& operator=(const Index&) = delete;
};

// Phase 1: construct the block skeleton. Every path referenced by the
// ParameterIndex is instantiated; a block whose child-slot paths are absent
// is bottom. Partial sibling slots or a missing root entry throw BuildError
// naming the path. Unordered interior blocks get bloom filters sized from the
// histogram estimate of keys passing through them.
Index build_logical(const ParameterIndex& pi, const DatasetStats& stats, IndexConfig cfg);

// Phase 2: stream keys into the skeleton; offset of keys[i] is base + i.
// Order-sensitive only within one bottom group (split boundaries), which is
// why the parallel variant partitions the stream by root-level slice.
void materialize(Index& idx, std::span<const Key> keys, Offset base_offset = 0);
void materialize_pair(Index& idx, Key k, Offset o);  // single-pair reference path

// OpenMP variant: one worker per root-block slice, bit-identical result to
// the serial path (per-slice stream order is preserved, block ids are
// derivation-based). Falls back to serial when the root group is bottom.
void materialize_parallel(Index& idx, std::span<const Key> keys, Offset base_offset = 0,
                          int workers = 0);

// Phase 3: idempotent; marks the index queryable.
void finalize(Index& idx);

struct IndexReport {
  std::uint32_t depth = 0;        // deepest level (root blocks = 0)
  std::uint64_t group_count = 0;
  std::uint64_t block_count = 0;
  std::uint64_t empty_blocks = 0;
  std::uint64_t stored_keys = 0;
  std::uint64_t stored_offsets = 0;
  std::uint64_t bytes = 0;        // accounting model, see stored_bytes()
  double space_utilization = 0.0; // storedKeys / (blockCount * m)
};

IndexReport inspect(const Index& idx);

// Deterministic storage accounting: 48 bytes per group, 64 per block,
// 16 per distinct key, 8 per extra offset, plus bloom filter bytes.
std::uint64_t stored_bytes(const Index& idx);

double space_utilization(const Index& idx);

// Run the structural invariant suite over every group (used after every op in
// the update soak test). Returns violations, empty == healthy.
std::vector<std::string> check_index_invariants(const Index& idx);

// Estimated keys per block for the layer-stop rule: a block with estimate
// <= alpha*m is bottom. `dilution` is the product of 1/x over unordered
// ancestors (hash routing splits mass evenly across child groups).
double estimate_block_keys(const DatasetStats& stats, const KeyRange& block_range,
                           double dilution);

// Deterministic per-group link seed, shared by the builder and by the
// controller's link-draw replay (their Bernoulli streams must agree).
std::uint64_t path_seed(std::uint64_t index_seed, const std::string& path);

// Child-group naming: slot s of block j is "<parent>/<j*x+s>".
std::string child_group_path(const std::string& parent, std::uint32_t block_idx,
                             std::uint32_t x, std::uint32_t slot);

// Scoped phase 1, used by retuning: builds just the subtree rooted at `path`,
// covering `range` at tree level `level`. Block ids continue from
// next_block_id and are never reused, so per-block performance records stay
// unambiguous across swaps.
std::unique_ptr<BlockGroup> build_group_tree(const ParameterIndex& pi,
                                             const DatasetStats& stats,
                                             const IndexConfig& cfg,
                                             const std::string& path, KeyRange range,
                                             double dilution, std::uint32_t level,
                                             std::uint64_t& next_block_id);

// Scoped phase 2: route one (key, offset) pair down a subtree, splitting
// overloaded bottom blocks. `added` increments when the key is new to its
// bottom block. Keys outside the subtree's logical range land in the nearest
// boundary block (its observed bounds stretch, logical ranges do not).
void route_pair_into(BlockGroup& g, Key k, Offset o, std::uint32_t m,
                     std::uint64_t& added);

// Walk helper shared by queries, retuning and reports.
void for_each_group(const Index& idx, const std::function<void(const BlockGroup&)>& fn);
void for_each_group(Index& idx, const std::function<void(BlockGroup&)>& fn);

}  // namespace nis
