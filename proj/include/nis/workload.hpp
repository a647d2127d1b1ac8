#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nis/ops.hpp"

namespace nis {

enum class Distribution { Uniform, LogNormal, Zipfian };

struct DatasetSpec {
  Distribution dist = Distribution::Uniform;
  std::uint64_t n = 0;
  std::uint64_t seed = 1;
  double lognormal_mean = 0.0;
  double lognormal_sd = 0.7;
  double zipf_exponent = 1.0;
};

// Deterministic key generation. Chunked into fixed 65536-key sub-streams so
// the output is identical whether chunks are produced serially or in
// parallel. LogNormal draws are clamped at the 99.9th percentile and scaled
// affinely onto [0, 2^63).
std::vector<Key> gen_keys(const DatasetSpec& spec, int workers = 0);

// inverse of the lognormal scaling, for distribution tests
double lognormal_unscale(const DatasetSpec& spec, Key k);

struct WorkloadOp {
  enum class Kind { Lookup, Range, Insert, Delete } kind = Kind::Lookup;
  Key key = 0;
  Key hi = 0;  // ranges only, inclusive
  double weight = 1.0;
};

// W1: lookups following the data distribution. W2: ranges spanning 1% of the
// key span. W3: alternating lookup/insert. W4: lookup/insert/range at 2:2:1.
enum class WorkloadKind { W1, W2, W3, W4 };

WorkloadKind workload_kind_from_string(const std::string& s);
const char* to_string(WorkloadKind k);

std::vector<WorkloadOp> gen_workload(WorkloadKind kind, std::span<const Key> data,
                                     std::uint64_t scale, std::uint64_t seed);

// key file: u64 LE count, then count u64 LE keys
void write_key_file(const std::string& file, std::span<const Key> keys);
std::vector<Key> read_key_file(const std::string& file);

// workload file: one op per line as JSON {"kind","key","hi","weight"}
void write_workload_file(const std::string& file, std::span<const WorkloadOp> ops);
std::vector<WorkloadOp> read_workload_file(const std::string& file);

enum class CostMode { VisitCount, WallClock };

struct BlockCost {
  double own_cost = 0.0;   // weight-scaled cost of visits to this block
  double agg_cost = 0.0;   // own + all descendants
  std::uint64_t own_visits = 0;
};

struct CostReport {
  CostMode mode = CostMode::VisitCount;
  double total_cost = 0.0;  // c_t
  std::uint64_t op_count = 0;
  std::map<std::string, std::pair<std::uint64_t, double>> per_kind;  // count, cost
  std::map<std::uint64_t, BlockCost> per_block;  // block id -> cost
  double space_utilization = 0.0;
  std::uint64_t index_bytes = 0;
};

// Executes ops against the index. VisitCount accumulates visitedBlocks *
// weight (deterministic); WallClock accumulates elapsed nanoseconds * weight.
// Inserts receive offsets insert_offset_base, +1 per insert executed.
CostReport run_workload(Index& idx, std::span<const WorkloadOp> ops, CostMode mode,
                        bool collect_per_block = false, Offset insert_offset_base = 0);

// The no-index access path: linear scan over an unsorted key array. Scans
// (lookup/range/delete) cost the current array size in VisitCount mode with
// no early exit; inserts cost 1 (append).
double measure_baseline(std::span<const Key> keys, std::span<const WorkloadOp> ops,
                        CostMode mode);

void write_cost_report_csv(std::ostream& out, const CostReport& r);

}  // namespace nis
