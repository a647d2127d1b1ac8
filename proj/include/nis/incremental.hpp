#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "nis/controller.hpp"

namespace nis {

// ---- performance classes ---------------------------------------------------

// 100 log-spaced cost buckets between the smallest positive observed cost and
// the 99.9th percentile. Zero cost (untouched block) is class 0; anything at
// or beyond the top edge is class 99. Monotone by construction.
struct PerfClassMap {
  static constexpr int kClasses = 100;
  double lo = 1.0;
  double hi = 2.0;

  static PerfClassMap from_costs(std::span<const double> costs);
  int classify(double cost) const;
  double midpoint(int cls) const;  // geometric bucket center, cost units
};

// ---- predictor samples ------------------------------------------------------

// One block row of a tree sample: fixed feature vector plus tree linkage and
// the measured outcome. Rows are parent-before-child.
struct SampleBlock {
  static constexpr int kRawFeatures = 42;
  std::array<double, kRawFeatures> raw{};
  int parent = -1;
  std::uint64_t block_id = 0;
  double measured_cost = 0.0;  // aggregated (own + descendants) epoch cost
  double query_count = 0.0;    // own visits in the epoch
};

struct TreeSample {
  std::vector<SampleBlock> blocks;
};

// Feature extraction. data_stats describes the indexed keys, query_stats the
// keys touched by the workload; per-block histograms are both sliced to the
// block's logical range. n_total normalizes the key-count feature.
TreeSample harvest_sample(const Index& idx, const CostReport& report,
                          const DatasetStats& query_stats);
// Same, rooted at one group (retune compares old and new subtrees this way).
// report may be null: features only, measurements zero.
TreeSample harvest_subtree(const BlockGroup& g, const DatasetStats& data_stats,
                           const DatasetStats& query_stats, std::uint64_t n_total,
                           std::uint32_t m, const CostReport* report = nullptr);
DatasetStats workload_key_stats(std::span<const WorkloadOp> ops);

// Same features for an emitted-but-unbuilt candidate, with estimated key
// counts; used when the mini-search scores structures through the predictor.
TreeSample candidate_sample(const Candidate& cand, const DatasetStats& data_stats,
                            const DatasetStats& scoped_stats,
                            const DatasetStats& query_stats, std::uint64_t n_total,
                            std::uint32_t m);

// ---- cost predictor G -------------------------------------------------------

// Tree-structured linear scorer: per block,
//   logits = Wraw * raw + Wchild * mean(children's class distributions) + b
// then softmax over 100 classes, evaluated bottom-up so parents see their
// children's distributions. Trained by gradient descent on the KL divergence
// between predicted and measured query-count shares per class.
struct CostPredictor {
  static constexpr int kClasses = PerfClassMap::kClasses;
  static constexpr std::size_t kOffRaw = 0;  // kClasses x kRawFeatures
  static constexpr std::size_t kOffChild =
      std::size_t(kClasses) * SampleBlock::kRawFeatures;  // kClasses x kClasses
  static constexpr std::size_t kOffBias =
      kOffChild + std::size_t(kClasses) * kClasses;  // kClasses
  static constexpr std::size_t param_count() { return kOffBias + kClasses; }

  PerfClassMap classes;
  std::vector<double> w;

  void init(std::uint64_t seed);
  bool initialized() const { return w.size() == param_count(); }

  // per-block class distributions, rows aligned with sample.blocks
  std::vector<std::array<double, kClasses>> forward(const TreeSample& sample) const;
  // expected latency of a whole (sub)tree: sum over blocks of the expected
  // class midpoint
  double predict_cost(const TreeSample& sample) const;
};

// KL(P||Q) of predicted vs measured query-count shares for one sample; the
// contribution is 0 (and carries no gradient) when the measurements occupy a
// single class or no queries ran.
double predictor_loss(const CostPredictor& g, const TreeSample& sample,
                      std::vector<double>* grad);

struct PredictorTrainConfig {
  std::uint32_t iterations = 300;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
};
CostPredictor train_predictor(std::span<const TreeSample> samples,
                              const PerfClassMap& classes,
                              const PredictorTrainConfig& cfg);

// ---- per-block tracking and outlier detection ------------------------------

struct BlockPerfRecord {
  std::uint64_t block_id = 0;
  double x0 = 0.0;                  // cost right after the last (re)tune
  std::vector<double> x_history;    // measured cost per epoch
  std::vector<int> class_history;   // measured cost's class per epoch
  std::vector<int> pred_history;    // predicted class per epoch
};

struct OutlierConfig {
  std::uint32_t tau = 3;  // consecutive predicted!=measured epochs tolerated
  double omega = 0.5;     // relative growth over x0 tolerated
};

struct PerfTracker {
  OutlierConfig cfg;
  std::map<std::uint64_t, BlockPerfRecord> records;
};

// Appends one epoch of measurements and predictions for every live block.
// Blocks appearing for the first time (fresh build, post-split, post-retune)
// start records with x0 = this measurement; records of removed blocks are
// dropped.
void record_epoch(PerfTracker& tracker, const Index& idx, const CostReport& report,
                  const CostPredictor& g, const DatasetStats& query_stats);

// Bottom-up scan: leaves are always examined; a parent only when one of its
// direct children is an outlier. Returns the maximal outlier subtree roots.
std::vector<std::uint64_t> detect_outliers(const Index& idx, const PerfTracker& tracker);

// ---- scoped retune ----------------------------------------------------------

struct RetuneConfig {
  SearchConfig search;  // mini-search knobs; rho is forced to 1 (no live c_s)
};

struct RetuneReport {
  std::uint32_t attempted = 0;      // child-group slots searched
  std::uint32_t swapped = 0;        // replacements installed
  std::uint32_t kept = 0;           // search failed to beat the current subtree
  std::uint32_t skipped = 0;        // bottom outliers / slots without queries
};

// For each outlier block, re-searches the structure below it (its child
// groups), scoring candidates through the predictor instead of live builds,
// and swaps a replacement subtree in only when its predicted cost beats the
// current one. Bottom outlier blocks have no structure below them and are
// skipped; they surface through their parent's aggregated growth instead.
RetuneReport retune(Index& idx, std::span<const std::uint64_t> outliers,
                    const CostPredictor& g, std::span<const WorkloadOp> ops,
                    const PolicyModel& policy, const RetuneConfig& rc);

// ---- episode harness --------------------------------------------------------

enum class EpisodeMode { Default, Inc, Trained };
EpisodeMode episode_mode_from_name(const std::string& name);

struct EpisodeRow {
  std::uint32_t episode = 0;
  double c_t = 0.0;
  std::uint32_t outliers = 0;
  std::uint32_t retuned = 0;  // subtrees swapped in
};

struct EpisodeConfig {
  SearchConfig initial_search;
  SearchConfig retrain_search;  // trained mode's per-episode re-search
  RetuneConfig retune;          // inc mode's scoped mini-search
  OutlierConfig outlier;
  PredictorTrainConfig predictor;
  std::uint32_t episodes = 5;
};

using EpisodeWorkload = std::function<std::vector<WorkloadOp>(std::uint32_t episode)>;

// One initial search builds the starting index; each episode measures its
// workload, then (between episodes) Default does nothing, Inc records, detects
// and retunes, and Trained re-searches for the upcoming workload, keeping the
// old structure when the search does not beat it.
std::vector<EpisodeRow> run_episodes(std::span<const Key> keys, const EpisodeWorkload& gen,
                                     EpisodeMode mode, const EpisodeConfig& cfg);

void write_episode_csv(std::ostream& out, std::span<const EpisodeRow> rows);

}  // namespace nis
