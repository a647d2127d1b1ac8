#include "nis/workload.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "nis/params.hpp"
#include "nis/rng.hpp"

namespace nis {

namespace {

constexpr std::uint64_t kChunk = 65536;
constexpr double kZ999 = 3.090232306167813;  // Phi^-1(0.999)
constexpr std::uint64_t kZipfUniverse = 1u << 20;

double lognormal_p999(const DatasetSpec& s) {
  return std::exp(s.lognormal_mean + s.lognormal_sd * kZ999);
}

void fill_chunk(const DatasetSpec& spec, std::uint64_t chunk_idx, std::span<Key> out,
                const std::vector<double>* zipf_cdf) {
  Rng rng(derive_seed(spec.seed, 0x6b657973, chunk_idx));
  switch (spec.dist) {
    case Distribution::Uniform:
      for (auto& k : out) {
        k = rng.next_u64();
        if (k > kMaxUsableKey) k = kMaxUsableKey;
      }
      break;
    case Distribution::LogNormal: {
      const double p999 = lognormal_p999(spec);
      for (auto& k : out) {
        double z = std::exp(spec.lognormal_mean + spec.lognormal_sd * rng.next_normal());
        if (z > p999) z = p999;
        double scaled = z / p999 * 0x1p63;
        if (scaled >= 0x1p63) scaled = std::nextafter(0x1p63, 0.0);
        k = static_cast<Key>(scaled);
      }
      break;
    }
    case Distribution::Zipfian: {
      for (auto& k : out) {
        double u = rng.next_double();
        auto it = std::lower_bound(zipf_cdf->begin(), zipf_cdf->end(), u);
        std::uint64_t rank = std::uint64_t(it - zipf_cdf->begin());
        k = rank << 43;  // spread ranks over [0, 2^63)
      }
      break;
    }
  }
}

}  // namespace

std::vector<Key> gen_keys(const DatasetSpec& spec, int workers) {
  std::vector<Key> keys(spec.n);
  std::vector<double> zipf_cdf;
  if (spec.dist == Distribution::Zipfian) {
    zipf_cdf.resize(kZipfUniverse);
    double acc = 0;
    for (std::uint64_t r = 0; r < kZipfUniverse; ++r) {
      acc += 1.0 / std::pow(double(r + 1), spec.zipf_exponent);
      zipf_cdf[r] = acc;
    }
    for (auto& v : zipf_cdf) v /= acc;
  }

  const std::uint64_t chunks = (spec.n + kChunk - 1) / kChunk;
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#pragma omp parallel for schedule(static)
#endif
  for (long c = 0; c < long(chunks); ++c) {
    std::uint64_t begin = std::uint64_t(c) * kChunk;
    std::uint64_t end = std::min(spec.n, begin + kChunk);
    fill_chunk(spec, std::uint64_t(c), std::span<Key>(keys.data() + begin, end - begin),
               spec.dist == Distribution::Zipfian ? &zipf_cdf : nullptr);
  }
  return keys;
}

double lognormal_unscale(const DatasetSpec& spec, Key k) {
  return double(k) / 0x1p63 * lognormal_p999(spec);
}

WorkloadKind workload_kind_from_string(const std::string& s) {
  if (s == "w1") return WorkloadKind::W1;
  if (s == "w2") return WorkloadKind::W2;
  if (s == "w3") return WorkloadKind::W3;
  if (s == "w4") return WorkloadKind::W4;
  throw std::invalid_argument("unknown workload kind: " + s);
}

const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::W1: return "w1";
    case WorkloadKind::W2: return "w2";
    case WorkloadKind::W3: return "w3";
    default: return "w4";
  }
}

std::vector<WorkloadOp> gen_workload(WorkloadKind kind, std::span<const Key> data,
                                     std::uint64_t scale, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("gen_workload: empty dataset");
  Rng rng(derive_seed(seed, 0x776f726b));
  Key lo_key = *std::min_element(data.begin(), data.end());
  Key hi_key = *std::max_element(data.begin(), data.end());
  const std::uint64_t span = hi_key - lo_key;
  const std::uint64_t range_width = span / 100;  // 1% of the key span

  auto sample_key = [&] { return data[rng.next_below(data.size())]; };
  auto lookup_op = [&] { return WorkloadOp{WorkloadOp::Kind::Lookup, sample_key(), 0, 1.0}; };
  auto range_op = [&] {
    Key lo = sample_key();
    Key hi = lo > kMaxUsableKey - range_width ? kMaxUsableKey : lo + range_width;
    return WorkloadOp{WorkloadOp::Kind::Range, lo, hi, 1.0};
  };
  auto insert_op = [&] {
    // fresh key near the data distribution: perturb a sampled key
    Key base = sample_key();
    Key jitter = rng.next_below(range_width ? range_width : 1);
    Key k = base > kMaxUsableKey - jitter ? kMaxUsableKey : base + jitter;
    return WorkloadOp{WorkloadOp::Kind::Insert, k, 0, 1.0};
  };

  std::vector<WorkloadOp> ops;
  ops.reserve(scale);
  for (std::uint64_t i = 0; i < scale; ++i) {
    switch (kind) {
      case WorkloadKind::W1: ops.push_back(lookup_op()); break;
      case WorkloadKind::W2: ops.push_back(range_op()); break;
      case WorkloadKind::W3: ops.push_back(i % 2 == 0 ? lookup_op() : insert_op()); break;
      case WorkloadKind::W4: {
        switch (i % 5) {  // 2:2:1 lookup/insert/range
          case 0: case 2: ops.push_back(lookup_op()); break;
          case 1: case 3: ops.push_back(insert_op()); break;
          default: ops.push_back(range_op()); break;
        }
        break;
      }
    }
  }
  return ops;
}

void write_key_file(const std::string& file, std::span<const Key> keys) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write key file " + file);
  std::uint64_t n = keys.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(keys.data()), std::streamsize(n * sizeof(Key)));
}

std::vector<Key> read_key_file(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open key file " + file);
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in) throw std::runtime_error("truncated key file " + file);
  std::vector<Key> keys(n);
  in.read(reinterpret_cast<char*>(keys.data()), std::streamsize(n * sizeof(Key)));
  if (!in) throw std::runtime_error("truncated key file " + file);
  return keys;
}

namespace {

const char* kind_name(WorkloadOp::Kind k) {
  switch (k) {
    case WorkloadOp::Kind::Lookup: return "lookup";
    case WorkloadOp::Kind::Range: return "range";
    case WorkloadOp::Kind::Insert: return "insert";
    default: return "delete";
  }
}

WorkloadOp::Kind kind_from_name(const std::string& s) {
  if (s == "lookup") return WorkloadOp::Kind::Lookup;
  if (s == "range") return WorkloadOp::Kind::Range;
  if (s == "insert") return WorkloadOp::Kind::Insert;
  if (s == "delete") return WorkloadOp::Kind::Delete;
  throw std::invalid_argument("unknown op kind: " + s);
}

}  // namespace

void write_workload_file(const std::string& file, std::span<const WorkloadOp> ops) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write workload file " + file);
  for (const auto& op : ops) {
    nlohmann::json j;
    j["kind"] = kind_name(op.kind);
    j["key"] = op.key;
    if (op.kind == WorkloadOp::Kind::Range) j["hi"] = op.hi;
    j["weight"] = op.weight;
    out << j.dump() << '\n';
  }
}

std::vector<WorkloadOp> read_workload_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open workload file " + file);
  std::vector<WorkloadOp> ops;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("workload line " + std::to_string(line_no) + ": " + e.what());
    }
    WorkloadOp op;
    op.kind = kind_from_name(j.at("kind").get<std::string>());
    op.key = j.at("key").get<std::uint64_t>();
    if (op.kind == WorkloadOp::Kind::Range) op.hi = j.at("hi").get<std::uint64_t>();
    op.weight = j.value("weight", 1.0);
    ops.push_back(op);
  }
  return ops;
}

CostReport run_workload(Index& idx, std::span<const WorkloadOp> ops, CostMode mode,
                        bool collect_per_block, Offset insert_offset_base) {
  CostReport rep;
  rep.mode = mode;
  rep.op_count = ops.size();
  Offset next_insert = insert_offset_base;

  std::vector<std::uint64_t> log;
  for (const auto& op : ops) {
    log.clear();
    std::vector<std::uint64_t>* logp = collect_per_block ? &log : nullptr;
    double cost = 0.0;
    auto t0 = std::chrono::steady_clock::now();
    std::uint32_t visits = 0;
    switch (op.kind) {
      case WorkloadOp::Kind::Lookup: visits = lookup(idx, op.key, logp).visited_blocks; break;
      case WorkloadOp::Kind::Range:
        visits = range_search(idx, op.key, op.hi, logp).visited_blocks;
        break;
      case WorkloadOp::Kind::Insert:
        visits = insert_key(idx, op.key, next_insert++, logp).visited_blocks;
        break;
      case WorkloadOp::Kind::Delete: visits = erase_key(idx, op.key, logp).visited_blocks; break;
    }
    if (mode == CostMode::VisitCount) {
      cost = double(visits) * op.weight;
    } else {
      auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      cost = double(ns) * op.weight;
    }
    rep.total_cost += cost;
    auto& pk = rep.per_kind[kind_name(op.kind)];
    ++pk.first;
    pk.second += cost;
    if (collect_per_block && !log.empty()) {
      const double share = cost / double(log.size());
      for (auto id : log) {
        auto& bc = rep.per_block[id];
        bc.own_cost += share;
        ++bc.own_visits;
      }
    }
  }

  if (collect_per_block) {
    // aggregate: interior block cost includes all descendants
    struct Agg {
      CostReport* rep;
      double sum(const BlockGroup& g) {
        double s = 0;
        for (const auto& b : g.blocks) {
          double own = 0;
          auto it = rep->per_block.find(b.id);
          if (it != rep->per_block.end()) own = it->second.own_cost;
          double below = 0;
          for (const auto& c : b.children) below += sum(*c);
          if (own + below > 0) {
            auto& bc = rep->per_block[b.id];
            bc.agg_cost = own + below;
          }
          s += own + below;
        }
        return s;
      }
    } agg{&rep};
    agg.sum(idx.root);
  }
  rep.space_utilization = space_utilization(idx);
  rep.index_bytes = stored_bytes(idx);
  return rep;
}

double measure_baseline(std::span<const Key> keys, std::span<const WorkloadOp> ops,
                        CostMode mode) {
  std::vector<Key> arr(keys.begin(), keys.end());
  double total = 0.0;
  volatile std::uint64_t sink = 0;  // defeat scan elision in wallclock mode
  for (const auto& op : ops) {
    if (mode == CostMode::VisitCount) {
      switch (op.kind) {
        case WorkloadOp::Kind::Insert:
          arr.push_back(op.key);
          total += 1.0 * op.weight;
          break;
        case WorkloadOp::Kind::Delete: {
          total += double(arr.size()) * op.weight;
          auto it = std::remove(arr.begin(), arr.end(), op.key);
          arr.erase(it, arr.end());
          break;
        }
        default:  // lookup / range scan everything, no early exit
          total += double(arr.size()) * op.weight;
          break;
      }
    } else {
      auto t0 = std::chrono::steady_clock::now();
      switch (op.kind) {
        case WorkloadOp::Kind::Insert: arr.push_back(op.key); break;
        case WorkloadOp::Kind::Delete: {
          auto it = std::remove(arr.begin(), arr.end(), op.key);
          arr.erase(it, arr.end());
          break;
        }
        case WorkloadOp::Kind::Lookup: {
          std::uint64_t hits = 0;
          for (Key k : arr)
            if (k == op.key) ++hits;
          sink = sink + hits;
          break;
        }
        case WorkloadOp::Kind::Range: {
          std::uint64_t hits = 0;
          for (Key k : arr)
            if (k >= op.key && k <= op.hi) ++hits;
          sink = sink + hits;
          break;
        }
      }
      auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      total += double(ns) * op.weight;
    }
  }
  (void)sink;
  return total;
}

void write_cost_report_csv(std::ostream& out, const CostReport& r) {
  out << "metric,value\n";
  out << "mode," << (r.mode == CostMode::VisitCount ? "visit" : "wall") << '\n';
  out << "total_cost," << format_double(r.total_cost) << '\n';
  out << "op_count," << r.op_count << '\n';
  out << "space_utilization," << format_double(r.space_utilization) << '\n';
  out << "index_bytes," << r.index_bytes << '\n';
  for (const auto& [kind, cd] : r.per_kind) {
    out << "count_" << kind << ',' << cd.first << '\n';
    out << "cost_" << kind << ',' << format_double(cd.second) << '\n';
  }
}

}  // namespace nis
