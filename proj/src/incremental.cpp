#include "nis/incremental.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "nis/ops.hpp"
#include "nis/params.hpp"

namespace nis {

// ---- performance classes ---------------------------------------------------

PerfClassMap PerfClassMap::from_costs(std::span<const double> costs) {
  std::vector<double> pos;
  pos.reserve(costs.size());
  for (double c : costs)
    if (c > 0.0) pos.push_back(c);
  PerfClassMap map;
  if (pos.empty()) return map;  // degenerate 1..2 default, everything class 0
  std::sort(pos.begin(), pos.end());
  map.lo = pos.front();
  const std::size_t p999 = std::min(pos.size() - 1, (pos.size() * 999) / 1000);
  map.hi = pos[p999];
  if (!(map.hi > map.lo)) map.hi = map.lo * 2.0;
  return map;
}

int PerfClassMap::classify(double cost) const {
  if (!(cost > lo)) return 0;
  if (cost >= hi) return kClasses - 1;
  const int cls = int(kClasses * std::log(cost / lo) / std::log(hi / lo));
  return std::clamp(cls, 0, kClasses - 1);
}

double PerfClassMap::midpoint(int cls) const {
  return lo * std::pow(hi / lo, (cls + 0.5) / kClasses);
}

// ---- feature extraction ------------------------------------------------------

namespace {

void fill_raw(std::array<double, SampleBlock::kRawFeatures>& raw, const HyperParams& hp,
              std::uint32_t level, bool bottom, double key_count, std::uint64_t n_total,
              std::uint32_t m, const KeyRange& block_range, const DatasetStats& data_stats,
              const DatasetStats& query_stats) {
  raw[0] = hp.block_type == BlockType::Ordered ? 1.0 : 0.0;
  raw[1] = hp.block_type == BlockType::Unordered ? 1.0 : 0.0;
  raw[2] = double(hp.x) / double(m);
  raw[3] = std::log2(double(std::max<std::uint32_t>(hp.y, 1))) / 8.0;
  raw[4] = hp.alpha;
  raw[5] = hp.beta;
  double gsum = 0.0;
  for (double g : hp.gamma) gsum += g;
  raw[6] = hp.gamma.empty() ? 0.0 : gsum / double(hp.gamma.size());
  raw[7] = double(level) / 8.0;
  raw[8] = bottom ? 1.0 : 0.0;
  const double denom = std::max(std::log1p(double(n_total)), 1e-9);
  raw[9] = std::log1p(std::max(key_count, 0.0)) / denom;
  const std::vector<double> dh = normalized_range_histogram(data_stats, block_range, 16);
  const std::vector<double> qh = normalized_range_histogram(query_stats, block_range, 16);
  for (int i = 0; i < 16; ++i) {
    raw[10 + i] = dh[i];
    raw[26 + i] = qh[i];
  }
}

void subtree_rows(const BlockGroup& g, int parent_row, const DatasetStats& data_stats,
                  const DatasetStats& query_stats, std::uint64_t n_total, std::uint32_t m,
                  const CostReport* report, TreeSample& out) {
  for (const auto& b : g.blocks) {
    SampleBlock row;
    row.parent = parent_row;
    row.block_id = b.id;
    fill_raw(row.raw, g.params, b.level, b.bottom(), double(b.entries.size()), n_total,
             m, b.range, data_stats, query_stats);
    if (report) {
      auto it = report->per_block.find(b.id);
      if (it != report->per_block.end()) {
        row.measured_cost = it->second.agg_cost;
        row.query_count = double(it->second.own_visits);
      }
    }
    const int my_row = int(out.blocks.size());
    out.blocks.push_back(row);
    for (const auto& child : b.children)
      subtree_rows(*child, my_row, data_stats, query_stats, n_total, m, report, out);
  }
}

}  // namespace

TreeSample harvest_subtree(const BlockGroup& g, const DatasetStats& data_stats,
                           const DatasetStats& query_stats, std::uint64_t n_total,
                           std::uint32_t m, const CostReport* report) {
  TreeSample s;
  subtree_rows(g, -1, data_stats, query_stats, n_total, m, report, s);
  return s;
}

TreeSample harvest_sample(const Index& idx, const CostReport& report,
                          const DatasetStats& query_stats) {
  return harvest_subtree(idx.root, idx.stats, query_stats, idx.stored_keys, idx.cfg.m,
                         &report);
}

DatasetStats workload_key_stats(std::span<const WorkloadOp> ops) {
  std::vector<Key> keys;
  keys.reserve(ops.size());
  for (const auto& op : ops) keys.push_back(op.key);
  return compute_stats(keys);
}

TreeSample candidate_sample(const Candidate& cand, const DatasetStats& data_stats,
                            const DatasetStats& scoped_stats,
                            const DatasetStats& query_stats, std::uint64_t n_total,
                            std::uint32_t m) {
  TreeSample s;
  std::vector<std::vector<int>> rows_of(cand.groups.size());
  for (std::size_t gi = 0; gi < cand.groups.size(); ++gi) {
    const EmittedGroup& eg = cand.groups[gi];
    int parent_row = -1;
    if (eg.parent >= 0) {
      const EmittedGroup& pg = cand.groups[eg.parent];
      const std::size_t slash = eg.path.find_last_of('/');
      const std::uint64_t comp = std::stoull(eg.path.substr(slash + 1));
      parent_row = rows_of[eg.parent][comp / pg.params.x];
    }
    rows_of[gi].reserve(eg.params.y);
    for (std::uint32_t j = 0; j < eg.params.y; ++j) {
      const KeyRange br = range_slice(eg.range, eg.params.y, j);
      SampleBlock row;
      row.parent = parent_row;
      fill_raw(row.raw, eg.params, eg.level, eg.stopped,
               estimate_block_keys(scoped_stats, br, eg.dilution), n_total, m, br,
               data_stats, query_stats);
      rows_of[gi].push_back(int(s.blocks.size()));
      s.blocks.push_back(row);
    }
  }
  return s;
}

// ---- predictor ----------------------------------------------------------------

void CostPredictor::init(std::uint64_t seed) {
  w.assign(param_count(), 0.0);
  Rng rng(derive_seed(seed, 0x70726564ULL));
  for (auto& v : w) v = (rng.next_double() - 0.5) * 0.02;
}

namespace {

// forward pass keeping the normalized child distributions, which the backward
// pass reuses
void predictor_forward(const CostPredictor& g, const TreeSample& sample,
                       std::vector<std::array<double, CostPredictor::kClasses>>& dists,
                       std::vector<std::array<double, CostPredictor::kClasses>>& cdists,
                       std::vector<int>& nkids) {
  constexpr int C = CostPredictor::kClasses;
  constexpr int F = SampleBlock::kRawFeatures;
  const std::size_t n = sample.blocks.size();
  dists.assign(n, {});
  cdists.assign(n, {});
  nkids.assign(n, 0);
  for (const auto& b : sample.blocks)
    if (b.parent >= 0) ++nkids[b.parent];

  for (std::size_t r = n; r-- > 0;) {
    const SampleBlock& b = sample.blocks[r];
    if (nkids[r] > 0)
      for (int k = 0; k < C; ++k) cdists[r][k] /= nkids[r];
    std::array<double, C> logits;
    for (int j = 0; j < C; ++j) {
      double a = g.w[CostPredictor::kOffBias + j];
      const double* wr = g.w.data() + CostPredictor::kOffRaw + std::size_t(j) * F;
      for (int f = 0; f < F; ++f) a += wr[f] * b.raw[f];
      if (nkids[r] > 0) {
        const double* wc = g.w.data() + CostPredictor::kOffChild + std::size_t(j) * C;
        for (int k = 0; k < C; ++k) a += wc[k] * cdists[r][k];
      }
      logits[j] = a;
    }
    double mx = logits[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, logits[j]);
    double sum = 0.0;
    for (int j = 0; j < C; ++j) {
      dists[r][j] = std::exp(logits[j] - mx);
      sum += dists[r][j];
    }
    for (int j = 0; j < C; ++j) dists[r][j] /= sum;
    if (b.parent >= 0)
      for (int k = 0; k < C; ++k) cdists[b.parent][k] += dists[r][k];
  }
}

}  // namespace

std::vector<std::array<double, CostPredictor::kClasses>> CostPredictor::forward(
    const TreeSample& sample) const {
  std::vector<std::array<double, kClasses>> dists, cdists;
  std::vector<int> nkids;
  predictor_forward(*this, sample, dists, cdists, nkids);
  return dists;
}

double CostPredictor::predict_cost(const TreeSample& sample) const {
  const auto dists = forward(sample);
  double total = 0.0;
  for (const auto& d : dists)
    for (int i = 0; i < kClasses; ++i) total += d[i] * classes.midpoint(i);
  return total;
}

double predictor_loss(const CostPredictor& g, const TreeSample& sample,
                      std::vector<double>* grad) {
  constexpr int C = CostPredictor::kClasses;
  constexpr int F = SampleBlock::kRawFeatures;
  const std::size_t n = sample.blocks.size();
  if (n == 0) return 0.0;

  double qsum = 0.0;
  for (const auto& b : sample.blocks) qsum += b.query_count;
  if (!(qsum > 0.0)) return 0.0;

  std::array<double, C> Q{};
  int occupied = 0;
  for (const auto& b : sample.blocks) {
    const int cls = g.classes.classify(b.measured_cost);
    if (Q[cls] == 0.0 && b.query_count > 0.0) ++occupied;
    Q[cls] += b.query_count / qsum;
  }
  if (occupied <= 1) return 0.0;  // degenerate: single measured class
  for (int i = 0; i < C; ++i) Q[i] = (Q[i] + 1e-9) / (1.0 + C * 1e-9);

  std::vector<std::array<double, C>> dists, cdists;
  std::vector<int> nkids;
  predictor_forward(g, sample, dists, cdists, nkids);

  std::array<double, C> P{};
  for (std::size_t r = 0; r < n; ++r) {
    const double wq = sample.blocks[r].query_count / qsum;
    if (wq == 0.0) continue;
    for (int i = 0; i < C; ++i) P[i] += wq * dists[r][i];
  }
  double loss = 0.0;
  for (int i = 0; i < C; ++i)
    if (P[i] > 0.0) loss += P[i] * std::log(P[i] / Q[i]);
  if (!grad) return loss;

  if (grad->size() != CostPredictor::param_count())
    grad->assign(CostPredictor::param_count(), 0.0);

  std::vector<std::vector<int>> kids(n);
  for (std::size_t r = 0; r < n; ++r)
    if (sample.blocks[r].parent >= 0) kids[sample.blocks[r].parent].push_back(int(r));

  // dL/dP_i = log(P_i/Q_i) + 1, flowing into each block's distribution by its
  // query weight; parents also push gradient into children's distributions
  std::array<double, C> dP;
  for (int i = 0; i < C; ++i) dP[i] = P[i] > 0.0 ? std::log(P[i] / Q[i]) + 1.0 : 0.0;

  std::vector<std::array<double, C>> inherited(n);
  for (auto& a : inherited) a.fill(0.0);

  for (std::size_t r = 0; r < n; ++r) {
    const SampleBlock& b = sample.blocks[r];
    const double wq = b.query_count / qsum;
    std::array<double, C> gvec;
    for (int i = 0; i < C; ++i) gvec[i] = wq * dP[i] + inherited[r][i];

    double dot = 0.0;
    for (int i = 0; i < C; ++i) dot += gvec[i] * dists[r][i];
    std::array<double, C> dz;
    for (int j = 0; j < C; ++j) dz[j] = dists[r][j] * (gvec[j] - dot);

    for (int j = 0; j < C; ++j) {
      const double d = dz[j];
      if (d == 0.0) continue;
      double* gr = grad->data() + CostPredictor::kOffRaw + std::size_t(j) * F;
      for (int f = 0; f < F; ++f) gr[f] += d * b.raw[f];
      (*grad)[CostPredictor::kOffBias + j] += d;
      if (nkids[r] > 0) {
        double* gc = grad->data() + CostPredictor::kOffChild + std::size_t(j) * C;
        for (int k = 0; k < C; ++k) gc[k] += d * cdists[r][k];
      }
    }
    if (!kids[r].empty()) {
      std::array<double, C> dcd{};
      for (int j = 0; j < C; ++j) {
        const double d = dz[j];
        if (d == 0.0) continue;
        const double* wc = g.w.data() + CostPredictor::kOffChild + std::size_t(j) * C;
        for (int k = 0; k < C; ++k) dcd[k] += d * wc[k];
      }
      for (int c : kids[r])
        for (int k = 0; k < C; ++k) inherited[c][k] += dcd[k] / kids[r].size();
    }
  }
  return loss;
}

CostPredictor train_predictor(std::span<const TreeSample> samples,
                              const PerfClassMap& classes,
                              const PredictorTrainConfig& cfg) {
  CostPredictor g;
  g.classes = classes;
  g.init(cfg.seed);
  std::vector<double> grad, step(CostPredictor::param_count());
  for (std::uint32_t it = 0; it < cfg.iterations; ++it) {
    std::fill(step.begin(), step.end(), 0.0);
    std::uint32_t contributing = 0;
    for (const auto& s : samples) {
      grad.assign(CostPredictor::param_count(), 0.0);
      const double loss = predictor_loss(g, s, &grad);
      if (loss == 0.0) continue;
      ++contributing;
      for (std::size_t p = 0; p < step.size(); ++p) step[p] += grad[p];
    }
    if (contributing == 0) break;
    for (std::size_t p = 0; p < g.w.size(); ++p)
      g.w[p] -= cfg.learning_rate * step[p] / contributing;
  }
  return g;
}

// ---- tracking & outliers -------------------------------------------------------

void record_epoch(PerfTracker& tracker, const Index& idx, const CostReport& report,
                  const CostPredictor& g, const DatasetStats& query_stats) {
  const TreeSample sample = harvest_sample(idx, report, query_stats);
  const auto dists = g.forward(sample);

  std::map<std::uint64_t, BlockPerfRecord> next;
  for (std::size_t r = 0; r < sample.blocks.size(); ++r) {
    const SampleBlock& b = sample.blocks[r];
    const double measured = b.measured_cost;
    int pred = 0;
    for (int i = 1; i < CostPredictor::kClasses; ++i)
      if (dists[r][i] > dists[r][pred]) pred = i;

    auto it = tracker.records.find(b.block_id);
    BlockPerfRecord rec;
    if (it != tracker.records.end()) {
      rec = std::move(it->second);
    } else {
      rec.block_id = b.block_id;
      rec.x0 = measured;  // first sighting: fresh build, split, or retune
    }
    rec.x_history.push_back(measured);
    rec.class_history.push_back(g.classes.classify(measured));
    rec.pred_history.push_back(pred);
    next.emplace(b.block_id, std::move(rec));
  }
  tracker.records = std::move(next);  // drops records of removed blocks
}

namespace {

bool block_is_outlier(const PerfTracker& t, std::uint64_t id) {
  auto it = t.records.find(id);
  if (it == t.records.end() || it->second.x_history.empty()) return false;
  const BlockPerfRecord& rec = it->second;
  if (rec.x_history.back() > (1.0 + t.cfg.omega) * rec.x0) return true;
  std::uint32_t run = 0;
  for (std::size_t i = rec.class_history.size(); i-- > 0;) {
    if (rec.class_history[i] == rec.pred_history[i]) break;
    ++run;
  }
  return run > t.cfg.tau;
}

// returns whether this block is an outlier; appends maximal roots
bool outlier_walk(const IndexBlock& b, const PerfTracker& t,
                  std::vector<std::uint64_t>& roots) {
  if (b.bottom()) {
    const bool own = block_is_outlier(t, b.id);
    if (own) roots.push_back(b.id);
    return own;
  }
  std::vector<std::uint64_t> below;
  bool any_child = false;
  for (const auto& cg : b.children)
    for (const auto& cb : cg->blocks) any_child |= outlier_walk(cb, t, below);
  if (any_child && block_is_outlier(t, b.id)) {
    roots.push_back(b.id);  // absorbs every root below
    return true;
  }
  roots.insert(roots.end(), below.begin(), below.end());
  return false;
}

}  // namespace

std::vector<std::uint64_t> detect_outliers(const Index& idx, const PerfTracker& tracker) {
  std::vector<std::uint64_t> roots;
  for (const auto& b : idx.root.blocks) outlier_walk(b, tracker, roots);
  return roots;
}

// ---- retune -----------------------------------------------------------------------

namespace {

struct Located {
  IndexBlock* block = nullptr;
  BlockGroup* group = nullptr;  // the group holding the block
  double dilution = 1.0;        // of that group
};

bool locate_block(BlockGroup& g, double dilution, std::uint64_t id, Located& out) {
  for (auto& b : g.blocks) {
    if (b.id == id) {
      out.block = &b;
      out.group = &g;
      out.dilution = dilution;
      return true;
    }
    const double cd =
        g.params.block_type == BlockType::Unordered ? dilution / g.params.x : dilution;
    for (auto& cg : b.children)
      if (locate_block(*cg, cd, id, out)) return true;
  }
  return false;
}

void collect_pairs(const BlockGroup& g, std::vector<std::pair<Key, Offset>>& out) {
  for (const auto& b : g.blocks) {
    for (const auto& [k, offs] : b.entries)
      for (Offset o : offs) out.emplace_back(k, o);
    for (const auto& cg : b.children) collect_pairs(*cg, out);
  }
}

bool op_touches(const WorkloadOp& op, const KeyRange& r) {
  if (op.kind == WorkloadOp::Kind::Range)
    return op.key < r.hi && (op.hi >= r.lo);
  return r.contains(op.key);
}

}  // namespace

RetuneReport retune(Index& idx, std::span<const std::uint64_t> outliers,
                    const CostPredictor& g, std::span<const WorkloadOp> ops,
                    const PolicyModel& policy, const RetuneConfig& rc) {
  RetuneReport rep;
  for (std::uint64_t id : outliers) {
    Located loc;
    if (!locate_block(idx.root, 1.0, id, loc)) {
      ++rep.skipped;
      continue;
    }
    IndexBlock& b = *loc.block;
    if (b.bottom()) {
      ++rep.skipped;  // no structure below; surfaces via the parent instead
      continue;
    }
    const double child_dilution = loc.group->params.block_type == BlockType::Unordered
                                      ? loc.dilution / loc.group->params.x
                                      : loc.dilution;
    for (std::size_t s = 0; s < b.children.size(); ++s) {
      BlockGroup& cs = *b.children[s];

      std::vector<std::pair<Key, Offset>> pairs;
      collect_pairs(cs, pairs);
      std::vector<WorkloadOp> scoped_ops;
      for (const auto& op : ops)
        if (op_touches(op, cs.range)) scoped_ops.push_back(op);
      if (pairs.empty() || scoped_ops.empty()) {
        ++rep.skipped;
        continue;
      }
      std::vector<Key> scoped_keys;
      scoped_keys.reserve(pairs.size());
      for (const auto& [k, o] : pairs) scoped_keys.push_back(k);
      const double c_b = measure_baseline(scoped_keys, scoped_ops, rc.search.mode);
      if (!(c_b > 0.0)) {
        ++rep.skipped;
        continue;
      }
      ++rep.attempted;

      const DatasetStats scoped_stats = compute_stats(scoped_keys);
      const DatasetStats scoped_qstats = workload_key_stats(scoped_ops);
      const DatasetStats& dstats = idx.stats;
      const std::uint64_t n_total = idx.stored_keys;
      const std::uint32_t m = idx.cfg.m;

      const TreeSample cur_sample =
          harvest_subtree(cs, dstats, scoped_qstats, n_total, m);
      const double cur_cost = g.predict_cost(cur_sample);

      EmitRoot root;
      root.path = cs.path;
      root.range = cs.range;
      root.dilution = child_dilution;
      root.level = cs.level;
      std::array<EmitRoot, 1> roots{root};

      EmitConfig ec;
      ec.m = m;
      ec.max_depth = idx.cfg.max_depth;
      ec.budget_bytes = rc.search.budget_bytes;

      PolicyModel model = policy;  // per-slot copy, trained locally
      BaselineState bs;
      bs.mu = rc.search.mu;
      const std::uint64_t slot_seed = derive_seed(rc.search.seed, id, s + 1);

      ParameterIndex best;
      double best_reward = -std::numeric_limits<double>::infinity();
      std::uint64_t best_seed = 0;
      const std::uint32_t N = std::max(1u, rc.search.batch);
      std::vector<double> grad_sum(PolicyModel::param_count());
      std::vector<double> grad;

      for (std::uint32_t epoch = 0; epoch < rc.search.epochs; ++epoch) {
        const double half = std::max(1u, rc.search.epochs / 2);
        const double lambda = epoch >= half ? 0.0 : 1.0 - double(epoch) / half;
        std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
        for (std::uint32_t i = 0; i < N; ++i) {
          const std::uint64_t cand_seed = derive_seed(slot_seed, epoch + 1, i + 1);
          EmitConfig eci = ec;
          eci.index_seed = cand_seed;
          Rng rng(cand_seed);
          Candidate cand =
              sample_candidate_scoped(model, scoped_stats, eci, roots, rng, lambda);
          double reward = -1.0;
          if (!cand.aborted) {
            const TreeSample ts = candidate_sample(cand, dstats, scoped_stats,
                                                   scoped_qstats, n_total, m);
            const double pred_ct = g.predict_cost(ts);
            reward = compute_reward(c_b, pred_ct, 0.0, 1.0);
            if (reward > best_reward) {
              best_reward = reward;
              best = cand.params;
              best_seed = cand_seed;
            }
          }
          update_baseline(bs, reward);
          grad.assign(PolicyModel::param_count(), 0.0);
          reinforce_objective(model, scoped_stats, eci, cand, reward - bs.b,
                              rc.search.epsilon, &grad);
          for (std::size_t p = 0; p < grad_sum.size(); ++p) grad_sum[p] += grad[p];
        }
        for (std::size_t p = 0; p < model.w.size(); ++p)
          model.w[p] += rc.search.sigma / N * grad_sum[p];
      }

      if (best.groups.empty()) {
        ++rep.kept;
        continue;
      }
      IndexConfig bc = idx.cfg;
      bc.seed = best_seed;
      std::unique_ptr<BlockGroup> fresh =
          build_group_tree(best, scoped_stats, bc, cs.path, cs.range, child_dilution,
                           cs.level, idx.next_block_id);
      std::uint64_t added = 0;
      for (const auto& [k, o] : pairs) route_pair_into(*fresh, k, o, m, added);

      const TreeSample new_sample =
          harvest_subtree(*fresh, dstats, scoped_qstats, n_total, m);
      if (g.predict_cost(new_sample) < cur_cost) {
        b.children[s] = std::move(fresh);  // the swap; old subtree served until here
        ++rep.swapped;
      } else {
        ++rep.kept;
      }
    }
  }
  return rep;
}

// ---- episodes ---------------------------------------------------------------------

EpisodeMode episode_mode_from_name(const std::string& name) {
  if (name == "default") return EpisodeMode::Default;
  if (name == "inc") return EpisodeMode::Inc;
  if (name == "trained") return EpisodeMode::Trained;
  throw std::invalid_argument("unknown episode mode: " + name);
}

namespace {

Index build_from_params(const ParameterIndex& pi, std::span<const Key> keys,
                        const DatasetStats& stats, const SearchConfig& sc,
                        std::uint64_t seed) {
  IndexConfig ic;
  ic.m = sc.m;
  ic.seed = seed;
  ic.budget_bytes = sc.budget_bytes;
  ic.max_depth = sc.max_depth;
  Index idx = build_logical(pi, stats, ic);
  materialize(idx, keys);
  finalize(idx);
  return idx;
}

}  // namespace

std::vector<EpisodeRow> run_episodes(std::span<const Key> keys, const EpisodeWorkload& gen,
                                     EpisodeMode mode, const EpisodeConfig& cfg) {
  const DatasetStats stats = compute_stats(keys);
  const std::vector<WorkloadOp> ops0 = gen(0);

  std::vector<TreeSample> samples;
  SampleSink sink;
  DatasetStats qstats0;
  if (mode == EpisodeMode::Inc) {
    qstats0 = workload_key_stats(ops0);
    sink = [&samples, &qstats0](const Index& i, const CostReport& r) {
      samples.push_back(harvest_sample(i, r, qstats0));
    };
  }

  SearchResult initial = search(keys, ops0, cfg.initial_search, nullptr, sink);
  ParameterIndex params = initial.found
                              ? initial.best_params
                              : btree_equivalent_config(stats, IndexConfig{
                                    cfg.initial_search.m, cfg.initial_search.seed,
                                    cfg.initial_search.budget_bytes,
                                    cfg.initial_search.max_depth});
  Index idx = build_from_params(params, keys, stats, cfg.initial_search,
                                derive_seed(cfg.initial_search.seed, 0x626c64ULL));

  CostPredictor g;
  PerfTracker tracker;
  tracker.cfg = cfg.outlier;
  if (mode == EpisodeMode::Inc) {
    std::vector<double> costs;
    for (const auto& s : samples)
      for (const auto& b : s.blocks) costs.push_back(b.measured_cost);
    g = train_predictor(samples, PerfClassMap::from_costs(costs), cfg.predictor);
  }

  const CostMode cmode = cfg.initial_search.mode;
  std::vector<EpisodeRow> rows;
  for (std::uint32_t e = 0; e < cfg.episodes; ++e) {
    const std::vector<WorkloadOp> ops = e == 0 ? ops0 : gen(e);
    const CostReport rep =
        run_workload(idx, ops, cmode, mode == EpisodeMode::Inc, keys.size());
    EpisodeRow row;
    row.episode = e;
    row.c_t = rep.total_cost;

    if (mode == EpisodeMode::Inc) {
      const DatasetStats qstats = workload_key_stats(ops);
      record_epoch(tracker, idx, rep, g, qstats);
      const std::vector<std::uint64_t> outliers = detect_outliers(idx, tracker);
      row.outliers = std::uint32_t(outliers.size());
      if (e + 1 < cfg.episodes && !outliers.empty()) {
        const RetuneReport rr = retune(idx, outliers, g, ops, initial.model, cfg.retune);
        row.retuned = rr.swapped;
      }
    } else if (mode == EpisodeMode::Trained && e + 1 < cfg.episodes) {
      // the ideal reference: re-search for the workload it is about to serve,
      // keep the old structure when the search cannot beat it
      const std::vector<WorkloadOp> ops_next = gen(e + 1);
      SearchConfig sc = cfg.retrain_search;
      sc.seed = derive_seed(cfg.retrain_search.seed, e + 1);
      SearchResult res = search(keys, ops_next, sc, &initial.model);
      if (res.found) {
        Index fresh = build_from_params(res.best_params, keys, stats, sc,
                                        derive_seed(sc.seed, 0x626c64ULL));
        const double old_ct = run_workload(idx, ops_next, cmode).total_cost;
        const double new_ct = run_workload(fresh, ops_next, cmode).total_cost;
        if (new_ct <= old_ct) idx = std::move(fresh);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

void write_episode_csv(std::ostream& out, std::span<const EpisodeRow> rows) {
  out << "episode,c_t,outliers,retuned\n";
  for (const auto& r : rows)
    out << r.episode << ',' << format_double(r.c_t) << ',' << r.outliers << ','
        << r.retuned << '\n';
}

}  // namespace nis
