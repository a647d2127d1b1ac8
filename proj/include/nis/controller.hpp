#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nis/index.hpp"
#include "nis/rng.hpp"
#include "nis/workload.hpp"

namespace nis {

// Decisions emitted for every group, in order. The first six are categorical
// picks over their pre-defined sets; Gamma is one step whose head emits a
// sigmoid per skip-link distance (8 covers y up to 256).
enum class StepKind : std::uint8_t { BlockType = 0, X, Y, Alpha, Beta, Stop, Gamma };
constexpr int kStepsPerGroup = 7;

// Sequential policy network, implemented flat with manual gradients (the
// analytic gradient is checked against finite differences, so every term has
// to be exact). Per step:
//   in  = kindEmb[kind] + Wprev * prevOut            (+ Wstats * statsBits at
//                                                      the tree's first step)
//   z   = sigmoid(Wz in + Uz h + bz)
//   c   = tanh  (Wc in + Uc h + bc)
//   h'  = (1 - z) h + z c
//   out = softmax(head h' + bias)   — sigmoid per distance for the gamma head
// The input chain carries the previous step's output probability vector (not
// the sampled choice). A child group starts from its parent's final hidden
// state and consumes the parent's gamma outputs as prevOut, which is what
// makes the whole tree one differentiable sequence.
struct PolicyModel {
  static constexpr int kEmbed = 32;
  static constexpr int kHidden = 64;
  static constexpr int kMaxOut = 8;
  static constexpr std::array<int, kStepsPerGroup> kHeadSizes{2, 4, 4, 6, 4, 2, 8};

  std::vector<double> w;

  // flat layout, in doubles
  static constexpr std::size_t kOffStats = 0;                               // E x 448
  static constexpr std::size_t kOffPrev = kEmbed * kControllerInputBits;    // E x 8
  static constexpr std::size_t kOffKind = kOffPrev + kEmbed * kMaxOut;      // 7 x E
  static constexpr std::size_t kOffWz = kOffKind + kStepsPerGroup * kEmbed; // H x E
  static constexpr std::size_t kOffUz = kOffWz + kHidden * kEmbed;          // H x H
  static constexpr std::size_t kOffBz = kOffUz + kHidden * kHidden;         // H
  static constexpr std::size_t kOffWc = kOffBz + kHidden;                   // H x E
  static constexpr std::size_t kOffUc = kOffWc + kHidden * kEmbed;          // H x H
  static constexpr std::size_t kOffBc = kOffUc + kHidden * kHidden;         // H
  static constexpr std::size_t kOffHeads = kOffBc + kHidden;  // per head: n x (H+1)

  static constexpr std::size_t head_offset(int kind) {
    std::size_t off = kOffHeads;
    for (int k = 0; k < kind; ++k) off += std::size_t(kHeadSizes[k]) * (kHidden + 1);
    return off;
  }
  static constexpr std::size_t param_count() {
    return head_offset(kStepsPerGroup);
  }

  void init(std::uint64_t seed);
  bool initialized() const { return w.size() == param_count(); }
};

// One recorded decision; exactly what a replay needs to reproduce the
// emission and to evaluate action log-probabilities under any weights.
struct StepRecord {
  StepKind kind = StepKind::BlockType;
  std::uint32_t group = 0;  // index into Candidate::groups
  int choice = -1;          // categorical steps
  bool forced = false;      // depth cap or layer-stop fired; carries no gradient
  bool explored = false;    // lambda bypass; gradient still uses model probs
  // gamma step only: the probabilities the built index uses, and the realized
  // link draws as per-distance Bernoulli counts (sufficient statistics)
  std::array<double, PolicyModel::kMaxOut> gamma{};
  std::array<std::uint32_t, PolicyModel::kMaxOut> link_ones{};
  std::array<std::uint32_t, PolicyModel::kMaxOut> link_total{};
};

// Emitted group skeleton: ranges and dilution are resolved at emission time
// so a replay never needs the dataset again.
struct EmittedGroup {
  std::string path;
  KeyRange range;
  double dilution = 1.0;
  std::uint32_t level = 0;
  int parent = -1;           // index into Candidate::groups, -1 for a root
  bool stats_input = false;  // first step receives the dataset encoding
  HyperParams params;
  bool stopped = true;       // no children emitted below this group
};

struct Candidate {
  std::vector<EmittedGroup> groups;  // breadth-first emission order
  std::vector<StepRecord> steps;     // kStepsPerGroup per group, same order
  ParameterIndex params;
  bool aborted = false;              // planned size exceeded the storage budget
  std::uint64_t planned_blocks = 0;
  std::uint64_t planned_bytes = 0;   // groups + blocks only; blooms counted post-build
  std::uint32_t depth = 0;           // group layers emitted
};

// Where an emission starts. The default run uses one root over the whole
// dataset; retuning passes an outlier block's child slots instead.
struct EmitRoot {
  std::string path = "0";
  KeyRange range;
  double dilution = 1.0;
  std::uint32_t level = 0;
};

// Everything emission must share with the index builder so that the decoded
// candidate and the built index agree (seeds, capacity, caps, budgets).
struct EmitConfig {
  std::uint32_t m = 256;
  std::uint64_t index_seed = 1;
  std::uint32_t max_depth = 8;
  std::uint64_t budget_bytes = 1ull << 30;
  PredefinedValueSets sets;
};

// Emit one candidate. Per step one lambda coin and one action draw are always
// consumed (gamma: eight) so the rng stream layout never depends on what was
// sampled. greedy takes the argmax everywhere and draws nothing.
Candidate sample_candidate(const PolicyModel& model, const DatasetStats& stats,
                           const EmitConfig& ec, Rng& rng, double lambda,
                           bool greedy = false);
Candidate sample_candidate_scoped(const PolicyModel& model, const DatasetStats& stats,
                                  const EmitConfig& ec, std::span<const EmitRoot> roots,
                                  Rng& rng, double lambda, bool greedy = false);

// R = rho * (c_b - c_t) / c_b + (1 - rho) * c_s. c_b must be positive and c_s
// in [0,1]; violations throw std::invalid_argument.
double compute_reward(double c_b, double c_t, double c_s, double rho);

// Exponentially aged baseline: b <- mu * b + (1 - mu) * R, starting at 0.
// The advantage of sample n uses the value after folding in R itself.
struct BaselineState {
  double b = 0.0;
  double mu = 0.8;
  std::uint64_t n = 0;
};
void update_baseline(BaselineState& s, double reward);

// Surrogate whose gradient is the policy-gradient direction for one
// candidate:
//   L = advantage * sum over free steps of log p(a_t)
// skipping forced steps and, when epsilon > 0, steps whose realized action
// probability falls outside [epsilon, 1 - epsilon]. Returns L and, if grad is
// non-null, accumulates dL/dtheta into it (size param_count).
double reinforce_objective(const PolicyModel& model, const DatasetStats& stats,
                           const EmitConfig& ec, const Candidate& cand,
                           double advantage, double epsilon, std::vector<double>* grad);

// Off-policy gradient for one candidate sampled under `ref`:
//   sum_t ratio_t * advantage * dlogp_t/dtheta - phi_step * dKL_t/dtheta
// with ratio_t = p_ref(a_t) / p_cur(a_t) and KL_t the divergence of the
// current step distribution from the reference one. Returns sum_t KL_t.
// At cur == ref every ratio is 1 and the KL gradient vanishes, so the
// direction coincides with reinforce_objective's.
double ppo_gradient(const PolicyModel& cur, const PolicyModel& ref,
                    const DatasetStats& stats, const EmitConfig& ec,
                    const Candidate& cand, double advantage, double phi_step,
                    std::vector<double>* grad);

double kl_categorical(std::span<const double> p, std::span<const double> q);

struct SearchConfig {
  std::uint32_t m = 256;
  double rho = 1.0;
  double sigma = 1e-3;    // learning rate
  double epsilon = 0.05;  // probability clip
  double mu = 0.8;        // baseline aging
  double phi = 0.5;       // KL weight (PPO)
  std::uint32_t batch = 16;
  std::uint32_t epochs = 100;
  bool use_ppo = false;
  std::uint32_t ppo_rounds = 4;  // ascent steps per sampled batch
  std::uint64_t budget_bytes = 1ull << 30;
  std::uint32_t max_depth = 8;
  std::uint64_t seed = 1;
  CostMode mode = CostMode::VisitCount;
  int workers = 0;
};

struct TraceRow {
  std::uint32_t epoch = 0;
  std::uint32_t candidate = 0;
  double reward = 0.0;
  double c_t = -1.0;  // -1: aborted before building
  double c_s = -1.0;
  std::uint32_t depth = 0;
  std::uint64_t group_count = 0;
};

struct SearchResult {
  ParameterIndex best_params;
  double best_reward = 0.0;
  double best_ct = -1.0;
  double best_cs = -1.0;
  double c_b = 0.0;
  bool found = false;  // at least one candidate built successfully
  std::vector<TraceRow> trace;
  PolicyModel model;
};

// Invoked for every successfully built candidate (predictor sample harvest).
using SampleSink = std::function<void(const Index&, const CostReport&)>;

// The training loop: per epoch, sample `batch` candidates (seeded per
// candidate, so batches can be evaluated in parallel bit-identically), build
// and benchmark each, fold rewards into the baseline in candidate order, then
// take a REINFORCE or PPO step. lambda decays linearly from 1 to 0 over the
// first half of the epochs. epochs == 0 benchmarks the greedy decode only.
SearchResult search(std::span<const Key> keys, std::span<const WorkloadOp> ops,
                    const SearchConfig& cfg, const PolicyModel* warm_start = nullptr,
                    const SampleSink& sink = {});

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows);

// Fixed reference shapes, built directly from the layer-stop rule.
ParameterIndex btree_equivalent_config(const DatasetStats& stats, const IndexConfig& cfg);
ParameterIndex hash_layer_config(const DatasetStats& stats, std::uint32_t x);
ParameterIndex skiplist_config(const DatasetStats& stats, std::uint32_t bottom_y);

}  // namespace nis
