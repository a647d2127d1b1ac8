#include "nis/index.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nis/rng.hpp"
#include "nis/sha1.hpp"

namespace nis {

std::uint64_t path_seed(std::uint64_t index_seed, const std::string& path) {
  std::uint64_t h = 1469598103934665603ull;  // FNV over the path string
  for (char c : path) h = (h ^ std::uint8_t(c)) * 1099511628211ull;
  return derive_seed(index_seed, h);
}

std::string child_group_path(const std::string& parent, std::uint32_t block_idx,
                             std::uint32_t x, std::uint32_t slot) {
  return parent + "/" + std::to_string(std::uint64_t(block_idx) * x + slot);
}

namespace {

// blocks, ranges, ids, skip links; everything about a group except its children
void init_shell(BlockGroup& g, const std::string& path, const HyperParams& hp,
                KeyRange range, double dilution, std::uint32_t level,
                const DatasetStats& stats, const IndexConfig& cfg,
                std::uint64_t& next_block_id) {
  hp.validate(cfg.m);
  g.path = path;
  g.range = range;
  g.params = hp;
  g.level = level;
  g.seed = path_seed(cfg.seed, path);
  g.est_keys = stats.range_mass(range) * dilution;
  g.blocks.resize(hp.y);
  for (std::uint32_t j = 0; j < hp.y; ++j) {
    IndexBlock& b = g.blocks[j];
    b.id = next_block_id++;
    b.level = level;
    b.range = range_slice(range, hp.y, j);
  }
  create_skip_links(g);
}

struct ShellRef {
  BlockGroup* g;
  double dilution;
};

// The ParameterIndex map sorts paths in DFS preorder, so a single forward pass
// sees every parent before its children. This avoids probing x*y candidate
// child paths per group, which dominated build time on wide trees.
BlockGroup build_subtree(const ParameterIndex& pi, const DatasetStats& stats,
                         const IndexConfig& cfg, const std::string& root_path,
                         KeyRange root_range, double root_dilution,
                         std::uint32_t root_level, std::uint64_t& next_block_id) {
  auto root_it = pi.groups.find(root_path);
  if (root_it == pi.groups.end())
    throw BuildError("missing ParameterIndex entry for required path " + root_path);
  if (root_level >= cfg.max_depth)
    throw BuildError("depth cap exceeded at group path " + root_path);

  BlockGroup root;
  init_shell(root, root_path, root_it->second, root_range, root_dilution, root_level,
             stats, cfg, next_block_id);

  std::unordered_map<std::string, ShellRef> live;
  live.emplace(root_path, ShellRef{&root, root_dilution});

  const std::string prefix = root_path + "/";
  for (auto it = std::next(root_it); it != pi.groups.end(); ++it) {
    const std::string& p = it->first;
    if (p.compare(0, prefix.size(), prefix) != 0) break;  // left the subtree
    const std::size_t cut = p.rfind('/');
    auto parent = live.find(p.substr(0, cut));
    if (parent == live.end()) continue;  // not reachable from the root: ignored
    BlockGroup& pg = *parent->second.g;
    const HyperParams& php = pg.params;
    std::uint64_t comp = 0;
    std::from_chars(p.data() + cut + 1, p.data() + p.size(), comp);
    if (comp >= std::uint64_t(php.x) * php.y) continue;  // no such slot: ignored
    if (pg.level + 1 >= cfg.max_depth)
      throw BuildError("depth cap exceeded at group path " + p);
    IndexBlock& pb = pg.blocks[comp / php.x];
    const std::uint32_t slot = comp % php.x;
    if (pb.children.empty()) {
      pb.children.resize(php.x);  // slots fill in as entries arrive
      if (php.block_type == BlockType::Unordered) {
        double est = stats.range_mass(pb.range) * parent->second.dilution;
        pb.bloom = std::make_unique<BloomFilter>(
            static_cast<std::uint64_t>(est < 1.0 ? 1.0 : est));
      }
    }
    const KeyRange cr = php.block_type == BlockType::Ordered
                            ? range_slice(pb.range, php.x, slot)
                            : pb.range;
    const double cd = php.block_type == BlockType::Unordered
                          ? parent->second.dilution / php.x
                          : parent->second.dilution;
    auto child = std::make_unique<BlockGroup>();
    init_shell(*child, p, it->second, cr, cd, pg.level + 1, stats, cfg, next_block_id);
    live.emplace(p, ShellRef{child.get(), cd});
    pb.children[slot] = std::move(child);
  }

  // a block is interior iff its child-slot paths exist; all-or-nothing
  std::function<void(const BlockGroup&)> check = [&](const BlockGroup& g) {
    const HyperParams& hp = g.params;
    for (std::uint32_t j = 0; j < hp.y; ++j) {
      const IndexBlock& b = g.blocks[j];
      if (b.children.empty()) continue;
      for (std::uint32_t s = 0; s < hp.x; ++s)
        if (!b.children[s])
          throw BuildError("missing ParameterIndex entry for required path " +
                           child_group_path(g.path, j, hp.x, s));
      for (std::uint32_t s = 0; s < hp.x; ++s) check(*b.children[s]);
    }
  };
  check(root);
  return root;
}

}  // namespace

double estimate_block_keys(const DatasetStats& stats, const KeyRange& block_range,
                           double dilution) {
  return stats.range_mass(block_range) * dilution;
}

Index build_logical(const ParameterIndex& pi, const DatasetStats& stats, IndexConfig cfg) {
  Index idx;
  idx.cfg = cfg;
  idx.stats = stats;
  idx.root = build_subtree(pi, stats, idx.cfg, "0", stats.root_range(), 1.0, 0,
                           idx.next_block_id);
  return idx;
}

std::unique_ptr<BlockGroup> build_group_tree(const ParameterIndex& pi,
                                             const DatasetStats& stats,
                                             const IndexConfig& cfg,
                                             const std::string& path, KeyRange range,
                                             double dilution, std::uint32_t level,
                                             std::uint64_t& next_block_id) {
  return std::make_unique<BlockGroup>(
      build_subtree(pi, stats, cfg, path, range, dilution, level, next_block_id));
}

namespace {

// clamp-aware child slot: keys pulled in by range expansion can sit outside
// the interior block's logical range
std::uint32_t child_slot_for(const IndexBlock& b, const HyperParams& hp, Key k) {
  if (hp.block_type == BlockType::Unordered) return hash_route(k, hp.x);
  Key kk = k;
  if (kk < b.range.lo) kk = b.range.lo;
  if (kk >= b.range.hi) kk = b.range.hi - 1;
  return ordered_child_slot(b, hp.x, kk);
}

void widen_root(Index& idx, Key k) {
  // streamed key outside the root range: stretch the boundary slice
  BlockGroup& r = idx.root;
  if (k < r.range.lo) {
    r.range.lo = k;
    r.blocks.front().range.lo = k;
  } else if (k >= r.range.hi) {
    r.range.hi = k + 1;
    r.blocks.back().range.hi = k + 1;
  }
}

}  // namespace

void route_pair_into(BlockGroup& g, Key k, Offset o, std::uint32_t m,
                     std::uint64_t& added) {
  BlockGroup* cur = &g;
  for (;;) {
    std::size_t bi = find_block_logical(*cur, k);
    IndexBlock& b = cur->blocks[bi];
    b.observe(k);
    if (b.bottom()) {
      if (block_insert_entry(b, k, o)) ++added;
      if (double(b.entries.size()) > cur->params.alpha * m) split_block(*cur, bi, m);
      return;
    }
    if (cur->params.block_type == BlockType::Unordered && b.bloom) b.bloom->add(k);
    std::uint32_t slot = child_slot_for(b, cur->params, k);
    cur = b.children[slot].get();
  }
}

void materialize_pair(Index& idx, Key k, Offset o) {
  if (idx.finalized) throw BuildError("materialize: index already finalized");
  if (k > kMaxUsableKey) throw BuildError("materialize: key out of domain");
  if (!idx.root.range.contains(k)) widen_root(idx, k);
  route_pair_into(idx.root, k, o, idx.cfg.m, idx.stored_keys);
}

void materialize(Index& idx, std::span<const Key> keys, Offset base_offset) {
  for (std::size_t i = 0; i < keys.size(); ++i)
    materialize_pair(idx, keys[i], base_offset + i);
}

void materialize_parallel(Index& idx, std::span<const Key> keys, Offset base_offset,
                          int workers) {
  if (idx.finalized) throw BuildError("materialize: index already finalized");
  BlockGroup& root = idx.root;
  // safe to parallelize only when no worker can mutate the shared root block
  // vector, i.e. every root block routes down into its own subtree
  bool all_interior = !root.blocks.empty();
  for (const auto& b : root.blocks)
    if (b.bottom()) all_interior = false;
  if (!all_interior || root.blocks.size() < 2) {  // serial reference path
    materialize(idx, keys, base_offset);
    return;
  }
  for (Key k : keys) {
    if (k > kMaxUsableKey) throw BuildError("materialize: key out of domain");
    if (!root.range.contains(k)) widen_root(idx, k);
  }

  // partition the stream per root block, preserving in-slice order
  std::vector<std::vector<std::pair<Key, Offset>>> slices(root.blocks.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    slices[find_block_logical(root, keys[i])].emplace_back(keys[i], base_offset + i);

  std::vector<std::uint64_t> added(root.blocks.size(), 0);
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#pragma omp parallel for schedule(dynamic)
#endif
  for (long s = 0; s < long(root.blocks.size()); ++s) {
    IndexBlock& b = root.blocks[s];
    const HyperParams& hp = root.params;
    for (const auto& [k, o] : slices[s]) {
      b.observe(k);
      if (hp.block_type == BlockType::Unordered && b.bloom) b.bloom->add(k);
      std::uint32_t slot = child_slot_for(b, hp, k);
      route_pair_into(*b.children[slot], k, o, idx.cfg.m, added[s]);
    }
  }
  for (auto a : added) idx.stored_keys += a;
}

void finalize(Index& idx) {
  idx.finalized = true;  // effective ranges are derived from observed bounds
}

namespace {

void walk_groups(const BlockGroup& g, const std::function<void(const BlockGroup&)>& fn) {
  fn(g);
  for (const auto& b : g.blocks)
    for (const auto& c : b.children) walk_groups(*c, fn);
}

void walk_groups_mut(BlockGroup& g, const std::function<void(BlockGroup&)>& fn) {
  fn(g);
  for (auto& b : g.blocks)
    for (auto& c : b.children) walk_groups_mut(*c, fn);
}

}  // namespace

void for_each_group(const Index& idx, const std::function<void(const BlockGroup&)>& fn) {
  walk_groups(idx.root, fn);
}

void for_each_group(Index& idx, const std::function<void(BlockGroup&)>& fn) {
  walk_groups_mut(idx.root, fn);
}

IndexReport inspect(const Index& idx) {
  IndexReport r;
  r.stored_keys = idx.stored_keys;
  for_each_group(idx, [&](const BlockGroup& g) {
    ++r.group_count;
    for (const auto& b : g.blocks) {
      ++r.block_count;
      r.depth = std::max(r.depth, b.level);
      if (b.empty_block()) ++r.empty_blocks;
      for (const auto& e : b.entries) r.stored_offsets += e.second.size();
    }
  });
  r.bytes = stored_bytes(idx);
  r.space_utilization =
      r.block_count ? double(r.stored_keys) / (double(r.block_count) * idx.cfg.m) : 0.0;
  return r;
}

std::uint64_t stored_bytes(const Index& idx) {
  std::uint64_t bytes = 0;
  for_each_group(idx, [&](const BlockGroup& g) {
    bytes += 48;
    for (const auto& b : g.blocks) {
      bytes += 64;
      bytes += 16 * b.entries.size();
      for (const auto& e : b.entries) bytes += 8 * (e.second.size() - 1);
      if (b.bloom) bytes += b.bloom->byte_count();
    }
  });
  return bytes;
}

double space_utilization(const Index& idx) {
  std::uint64_t blocks = 0;
  for_each_group(idx, [&](const BlockGroup& g) { blocks += g.blocks.size(); });
  return blocks ? double(idx.stored_keys) / (double(blocks) * idx.cfg.m) : 0.0;
}

std::vector<std::string> check_index_invariants(const Index& idx) {
  std::vector<std::string> bad;
  std::uint32_t max_level = 0;
  for_each_group(idx, [&](const BlockGroup& g) {
    auto v = check_group_invariants(g, idx.cfg.m);
    bad.insert(bad.end(), v.begin(), v.end());
    for (const auto& b : g.blocks) max_level = std::max(max_level, b.level);
  });
  if (max_level >= idx.cfg.max_depth) bad.push_back("tree depth exceeds cap");
  return bad;
}

}  // namespace nis
