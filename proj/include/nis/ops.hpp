#pragma once

#include <vector>

#include "nis/index.hpp"

namespace nis {

// Result of a point or range query. offsets is a sorted multiset;
// visited_blocks is the deterministic cost counter (one per block landed on).
struct QueryResult {
  std::vector<Offset> offsets;
  std::uint32_t visited_blocks = 0;
  bool found = false;
  bool bloom_rejected = false;  // an interior bloom filter cut the descent
};

struct UpdateResult {
  bool applied = false;          // insert: always true; erase: key existed
  std::uint32_t visited_blocks = 0;
};

// Point lookup. Walks each group by skip links over effective ranges, routes
// interior blocks by sub-range (ordered) or SHA-1 (unordered, bloom-gated).
QueryResult lookup(const Index& idx, Key k, std::vector<std::uint64_t>* visit_log = nullptr);

// Inclusive range query [lo, hi]: sorted union of every match. Unordered
// interior blocks forward to all x children (hashing destroys order).
QueryResult range_search(const Index& idx, Key lo, Key hi,
                         std::vector<std::uint64_t>* visit_log = nullptr);

// Insert after finalize: routed like materialization but over effective
// ranges; keys no block covers go through expand_range. Splits on overflow.
UpdateResult insert_key(Index& idx, Key k, Offset o,
                        std::vector<std::uint64_t>* visit_log = nullptr);

// Delete: removes the key and all its offsets; shrinks observed boundaries
// (including ancestors) and merges adjacent underflowing bottom blocks.
// Bloom filters are not updated. applied == false when the key was absent.
UpdateResult erase_key(Index& idx, Key k, std::vector<std::uint64_t>* visit_log = nullptr);

}  // namespace nis
