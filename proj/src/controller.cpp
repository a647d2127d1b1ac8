#include "nis/controller.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nis/ops.hpp"
#include "nis/params.hpp"

namespace nis {

namespace {

constexpr int E = PolicyModel::kEmbed;
constexpr int H = PolicyModel::kHidden;
constexpr int MO = PolicyModel::kMaxOut;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double safe_log(double p) { return std::log(std::clamp(p, 1e-300, 1.0)); }

// clamp away from 0/1 before dividing or taking log ratios
double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

// ---- forward cache -------------------------------------------------------

struct StepFwd {
  std::array<double, E> in;
  std::array<double, H> z, c, h;
  std::array<double, MO> out;  // probabilities / sigmoids, zero-padded
  int nout = 0;
};

struct GroupFwd {
  std::array<double, H> h0;
  std::array<StepFwd, kStepsPerGroup> steps;
};

// one cell + head evaluation; shared verbatim by emission and replay so the
// two can never disagree
void run_step(const PolicyModel& m, int kind, const double* h_pre, const double* prev_out,
              const std::vector<std::size_t>* stats_bits, StepFwd& f) {
  const double* w = m.w.data();

  for (int e = 0; e < E; ++e) f.in[e] = w[PolicyModel::kOffKind + kind * E + e];
  for (int o = 0; o < MO; ++o) {
    const double p = prev_out[o];
    if (p == 0.0) continue;
    const double* col = w + PolicyModel::kOffPrev;
    for (int e = 0; e < E; ++e) f.in[e] += col[e * MO + o] * p;
  }
  if (stats_bits) {
    for (std::size_t bit : *stats_bits) {
      const double* col = w + PolicyModel::kOffStats;
      for (int e = 0; e < E; ++e) f.in[e] += col[e * kControllerInputBits + bit];
    }
  }

  for (int i = 0; i < H; ++i) {
    double az = w[PolicyModel::kOffBz + i];
    double ac = w[PolicyModel::kOffBc + i];
    const double* wz = w + PolicyModel::kOffWz + std::size_t(i) * E;
    const double* wc = w + PolicyModel::kOffWc + std::size_t(i) * E;
    for (int e = 0; e < E; ++e) {
      az += wz[e] * f.in[e];
      ac += wc[e] * f.in[e];
    }
    const double* uz = w + PolicyModel::kOffUz + std::size_t(i) * H;
    const double* uc = w + PolicyModel::kOffUc + std::size_t(i) * H;
    for (int j = 0; j < H; ++j) {
      az += uz[j] * h_pre[j];
      ac += uc[j] * h_pre[j];
    }
    f.z[i] = sigmoid(az);
    f.c[i] = std::tanh(ac);
    f.h[i] = (1.0 - f.z[i]) * h_pre[i] + f.z[i] * f.c[i];
  }

  const int n = PolicyModel::kHeadSizes[kind];
  f.nout = n;
  f.out.fill(0.0);
  std::array<double, MO> logits{};
  const double* hw = w + PolicyModel::head_offset(kind);
  for (int j = 0; j < n; ++j) {
    double a = hw[std::size_t(j) * (H + 1) + H];
    for (int i = 0; i < H; ++i) a += hw[std::size_t(j) * (H + 1) + i] * f.h[i];
    logits[j] = a;
  }
  if (kind == int(StepKind::Gamma)) {
    for (int j = 0; j < n; ++j) f.out[j] = sigmoid(logits[j]);
  } else {
    double mx = logits[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      f.out[j] = std::exp(logits[j] - mx);
      sum += f.out[j];
    }
    for (int j = 0; j < n; ++j) f.out[j] /= sum;
  }
}

std::vector<std::size_t> stats_bit_indices(const DatasetStats& stats) {
  std::vector<double> enc = encode_controller_input(stats);
  std::vector<std::size_t> bits;
  for (std::size_t i = 0; i < enc.size(); ++i)
    if (enc[i] != 0.0) bits.push_back(i);
  return bits;
}

int argmax(const std::array<double, MO>& v, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

int inverse_cdf(const std::array<double, MO>& p, int n, double u) {
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += p[j];
    if (u < acc) return j;
  }
  return n - 1;
}

// replicate create_skip_links' draw stream and keep only the per-distance
// Bernoulli counts — these are the gamma step's realized actions
void link_draw_stats(std::uint64_t seed, std::uint32_t y, std::span<const double> gamma,
                     std::array<std::uint32_t, MO>& ones,
                     std::array<std::uint32_t, MO>& total) {
  ones.fill(0);
  total.fill(0);
  Rng rng(seed);
  const std::uint32_t gamma_n = std::uint32_t(gamma.size());
  for (std::size_t j = 0; j < y; ++j) {
    for (std::uint32_t d = 1; d <= gamma_n; ++d) {
      if (j + (std::size_t(1) << d) >= y) continue;
      ++total[d - 1];
      if (rng.next_bernoulli(gamma[d - 1])) ++ones[d - 1];
    }
  }
}

void check_sets(const PredefinedValueSets& sets) {
  if (sets.x_fractions.size() != std::size_t(PolicyModel::kHeadSizes[1]) ||
      sets.y_choices.size() != std::size_t(PolicyModel::kHeadSizes[2]) ||
      sets.alpha_choices.size() != std::size_t(PolicyModel::kHeadSizes[3]) ||
      sets.beta_choices.size() != std::size_t(PolicyModel::kHeadSizes[4]))
    throw std::logic_error("value-set sizes are fixed by the policy head layout");
}

}  // namespace

void PolicyModel::init(std::uint64_t seed) {
  w.assign(param_count(), 0.0);
  Rng rng(derive_seed(seed, 0x706f6c696379ULL));
  for (auto& v : w) v = (rng.next_double() - 0.5) * 0.16;  // U(-0.08, 0.08)
}

// ---- emission ------------------------------------------------------------

namespace {

struct Pending {
  std::string path;
  KeyRange range;
  double dilution;
  std::uint32_t level;
  int parent;
  bool stats_input;
};

}  // namespace

Candidate sample_candidate_scoped(const PolicyModel& model, const DatasetStats& stats,
                                  const EmitConfig& ec, std::span<const EmitRoot> roots,
                                  Rng& rng, double lambda, bool greedy) {
  if (!model.initialized()) throw std::logic_error("policy model not initialized");
  check_sets(ec.sets);
  const std::vector<std::size_t> bits = stats_bit_indices(stats);
  const std::vector<std::uint32_t> xs = ec.sets.x_values(ec.m);

  Candidate cand;
  std::deque<Pending> queue;
  for (const auto& r : roots)
    queue.push_back({r.path, r.range, r.dilution, r.level, -1, true});

  // retained per emitted group for the tree chains
  std::vector<std::array<double, H>> h_final;
  std::vector<std::array<double, MO>> gamma_out;

  const std::array<double, H> zeros_h{};
  const std::array<double, MO> zeros_o{};

  while (!queue.empty()) {
    Pending p = std::move(queue.front());
    queue.pop_front();

    EmittedGroup eg;
    eg.path = p.path;
    eg.range = p.range;
    eg.dilution = p.dilution;
    eg.level = p.level;
    eg.parent = p.parent;
    eg.stats_input = p.stats_input;
    const std::uint32_t gi = std::uint32_t(cand.groups.size());

    const double* h = p.parent < 0 ? zeros_h.data() : h_final[p.parent].data();
    const double* prev = p.parent < 0 ? zeros_o.data() : gamma_out[p.parent].data();

    HyperParams hp;
    bool stop = true;
    StepFwd f;
    for (int t = 0; t < kStepsPerGroup; ++t) {
      run_step(model, t, h, prev, (t == 0 && p.stats_input) ? &bits : nullptr, f);

      StepRecord rec;
      rec.kind = StepKind(t);
      rec.group = gi;

      if (t == int(StepKind::Gamma)) {
        bool explore = false;
        std::array<double, MO> draws{};
        if (!greedy) {
          explore = rng.next_double() < lambda;
          for (int d = 0; d < MO; ++d) draws[d] = rng.next_double();
        }
        rec.explored = explore;
        const std::uint32_t gamma_n = HyperParams::gamma_count(hp.y);
        hp.gamma.resize(gamma_n);
        for (std::uint32_t d = 0; d < gamma_n; ++d)
          hp.gamma[d] = explore ? draws[d] : f.out[d];
        rec.gamma.fill(0.0);
        for (std::uint32_t d = 0; d < gamma_n; ++d) rec.gamma[d] = hp.gamma[d];
        link_draw_stats(path_seed(ec.index_seed, p.path), hp.y, hp.gamma, rec.link_ones,
                        rec.link_total);
      } else {
        const int n = f.nout;
        bool forced = false;
        int choice;
        if (t == int(StepKind::Stop)) {
          const double est_per_block =
              estimate_block_keys(stats, p.range, p.dilution) / double(hp.y);
          forced = (p.level + 1 >= ec.max_depth) || (est_per_block <= hp.alpha * ec.m);
        }
        if (greedy) {
          choice = forced ? 1 : argmax(f.out, n);
        } else {
          // one coin + one draw per step, consumed regardless of the outcome,
          // so the stream layout is a pure function of the structure
          const bool explore = rng.next_double() < lambda;
          const double u = rng.next_double();
          if (forced)
            choice = 1;
          else if (explore)
            choice = std::min(n - 1, int(u * n));
          else
            choice = inverse_cdf(f.out, n, u);
          rec.explored = explore && !forced;
        }
        rec.forced = forced;
        rec.choice = choice;

        switch (StepKind(t)) {
          case StepKind::BlockType:
            hp.block_type = choice == 0 ? BlockType::Ordered : BlockType::Unordered;
            break;
          case StepKind::X: hp.x = xs[choice]; break;
          case StepKind::Y: hp.y = ec.sets.y_choices[choice]; break;
          case StepKind::Alpha: hp.alpha = ec.sets.alpha_choices[choice]; break;
          case StepKind::Beta: hp.beta = ec.sets.beta_choices[choice]; break;
          case StepKind::Stop: stop = choice == 1; break;
          default: break;
        }
      }
      cand.steps.push_back(rec);
      h = f.h.data();
      prev = f.out.data();
    }

    eg.params = hp;
    eg.stopped = stop;
    h_final.push_back(f.h);  // f holds the gamma step here
    gamma_out.push_back(f.out);
    cand.groups.push_back(eg);
    cand.params.groups.emplace(p.path, hp);
    cand.depth = std::max(cand.depth, p.level + 1);

    cand.planned_blocks += hp.y;
    cand.planned_bytes += 48 + 64ull * hp.y;
    if (cand.planned_bytes > ec.budget_bytes) {
      cand.aborted = true;  // emitted prefix stays valid for gradients
      break;
    }

    if (!stop) {
      const double cd =
          hp.block_type == BlockType::Unordered ? p.dilution / hp.x : p.dilution;
      for (std::uint32_t j = 0; j < hp.y; ++j) {
        KeyRange br = range_slice(p.range, hp.y, j);
        for (std::uint32_t s = 0; s < hp.x; ++s) {
          KeyRange cr = hp.block_type == BlockType::Ordered ? range_slice(br, hp.x, s) : br;
          queue.push_back({child_group_path(p.path, j, hp.x, s), cr, cd, p.level + 1,
                           int(gi), false});
        }
      }
    }
  }
  return cand;
}

Candidate sample_candidate(const PolicyModel& model, const DatasetStats& stats,
                           const EmitConfig& ec, Rng& rng, double lambda, bool greedy) {
  EmitRoot root;
  root.range = stats.root_range();
  std::array<EmitRoot, 1> roots{root};
  return sample_candidate_scoped(model, stats, ec, roots, rng, lambda, greedy);
}

// ---- replay + backward ---------------------------------------------------

namespace {

struct ReplayFwd {
  std::vector<GroupFwd> groups;
};

void replay_forward(const PolicyModel& model, const std::vector<std::size_t>& bits,
                    const Candidate& cand, ReplayFwd& out) {
  out.groups.resize(cand.groups.size());
  const std::array<double, H> zeros_h{};
  const std::array<double, MO> zeros_o{};
  for (std::size_t gi = 0; gi < cand.groups.size(); ++gi) {
    const EmittedGroup& eg = cand.groups[gi];
    GroupFwd& gf = out.groups[gi];
    gf.h0 = eg.parent < 0 ? zeros_h : out.groups[eg.parent].steps[kStepsPerGroup - 1].h;
    const double* h = gf.h0.data();
    const double* prev = eg.parent < 0
                             ? zeros_o.data()
                             : out.groups[eg.parent].steps[kStepsPerGroup - 1].out.data();
    for (int t = 0; t < kStepsPerGroup; ++t) {
      run_step(model, t, h, prev, (t == 0 && eg.stats_input) ? &bits : nullptr,
               gf.steps[t]);
      h = gf.steps[t].h.data();
      prev = gf.steps[t].out.data();
    }
  }
}

// Backpropagate given per-step gradients at the pre-softmax/-sigmoid logits.
// Handles the three chains: hidden within a group, output->next input within
// a group, and gamma-step hidden/output into every child group.
void backward(const PolicyModel& model, const std::vector<std::size_t>& bits,
              const Candidate& cand, const ReplayFwd& fwd,
              const std::vector<std::array<double, MO>>& dlogits_all,
              std::vector<double>& grad) {
  const double* w = model.w.data();
  const std::size_t ng = cand.groups.size();
  std::vector<std::array<double, H>> dh_final(ng);
  std::vector<std::array<double, MO>> dout_final(ng);
  for (auto& a : dh_final) a.fill(0.0);
  for (auto& a : dout_final) a.fill(0.0);

  std::array<double, H> dh;
  std::array<double, MO> dout_next{};  // grad wrt step t's out from step t+1's input

  for (std::size_t gi = ng; gi-- > 0;) {
    const EmittedGroup& eg = cand.groups[gi];
    const GroupFwd& gf = fwd.groups[gi];
    dh = dh_final[gi];
    dout_next = dout_final[gi];

    for (int t = kStepsPerGroup - 1; t >= 0; --t) {
      const StepFwd& f = gf.steps[t];
      const int n = f.nout;

      // logits gradient: the objective part plus the chain through f.out
      std::array<double, MO> dlog = dlogits_all[gi * kStepsPerGroup + t];
      if (t == int(StepKind::Gamma)) {
        for (int j = 0; j < n; ++j)
          dlog[j] += dout_next[j] * f.out[j] * (1.0 - f.out[j]);
      } else {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += dout_next[j] * f.out[j];
        for (int j = 0; j < n; ++j) dlog[j] += f.out[j] * (dout_next[j] - dot);
      }

      // head
      const std::size_t hoff = PolicyModel::head_offset(t);
      for (int j = 0; j < n; ++j) {
        const double d = dlog[j];
        if (d == 0.0) continue;
        double* gw = grad.data() + hoff + std::size_t(j) * (H + 1);
        const double* hw = w + hoff + std::size_t(j) * (H + 1);
        for (int i = 0; i < H; ++i) {
          gw[i] += d * f.h[i];
          dh[i] += hw[i] * d;
        }
        gw[H] += d;
      }

      // cell
      const double* h_pre = t == 0 ? gf.h0.data() : gf.steps[t - 1].h.data();
      std::array<double, H> dzpre, dcpre, dh_prev;
      for (int i = 0; i < H; ++i) {
        const double dz = dh[i] * (f.c[i] - h_pre[i]);
        const double dc = dh[i] * f.z[i];
        dh_prev[i] = dh[i] * (1.0 - f.z[i]);
        dzpre[i] = dz * f.z[i] * (1.0 - f.z[i]);
        dcpre[i] = dc * (1.0 - f.c[i] * f.c[i]);
      }
      std::array<double, E> din{};
      for (int i = 0; i < H; ++i) {
        const double az = dzpre[i], ac = dcpre[i];
        if (az != 0.0) {
          double* gwz = grad.data() + PolicyModel::kOffWz + std::size_t(i) * E;
          double* guz = grad.data() + PolicyModel::kOffUz + std::size_t(i) * H;
          const double* wz = w + PolicyModel::kOffWz + std::size_t(i) * E;
          const double* uz = w + PolicyModel::kOffUz + std::size_t(i) * H;
          for (int e = 0; e < E; ++e) {
            gwz[e] += az * f.in[e];
            din[e] += wz[e] * az;
          }
          for (int j = 0; j < H; ++j) {
            guz[j] += az * h_pre[j];
            dh_prev[j] += uz[j] * az;
          }
          grad[PolicyModel::kOffBz + i] += az;
        }
        if (ac != 0.0) {
          double* gwc = grad.data() + PolicyModel::kOffWc + std::size_t(i) * E;
          double* guc = grad.data() + PolicyModel::kOffUc + std::size_t(i) * H;
          const double* wc = w + PolicyModel::kOffWc + std::size_t(i) * E;
          const double* uc = w + PolicyModel::kOffUc + std::size_t(i) * H;
          for (int e = 0; e < E; ++e) {
            gwc[e] += ac * f.in[e];
            din[e] += wc[e] * ac;
          }
          for (int j = 0; j < H; ++j) {
            guc[j] += ac * h_pre[j];
            dh_prev[j] += uc[j] * ac;
          }
          grad[PolicyModel::kOffBc + i] += ac;
        }
      }

      // input: kind embedding, prev-output projection, stats projection
      for (int e = 0; e < E; ++e) grad[PolicyModel::kOffKind + t * E + e] += din[e];
      const double* prev_out =
          t > 0 ? gf.steps[t - 1].out.data()
                : (eg.parent < 0
                       ? nullptr
                       : fwd.groups[eg.parent].steps[kStepsPerGroup - 1].out.data());
      std::array<double, MO> dprev{};
      if (prev_out) {
        for (int e = 0; e < E; ++e) {
          const double d = din[e];
          if (d == 0.0) continue;
          double* gp = grad.data() + PolicyModel::kOffPrev + std::size_t(e) * MO;
          const double* wp = w + PolicyModel::kOffPrev + std::size_t(e) * MO;
          for (int o = 0; o < MO; ++o) {
            gp[o] += d * prev_out[o];
            dprev[o] += wp[o] * d;
          }
        }
      }
      if (t == 0 && eg.stats_input) {
        for (std::size_t bit : bits)
          for (int e = 0; e < E; ++e)
            grad[PolicyModel::kOffStats + std::size_t(e) * kControllerInputBits + bit] +=
                din[e];
      }

      if (t > 0) {
        dout_next = dprev;
        dh = dh_prev;
      } else {
        if (eg.parent >= 0) {
          for (int o = 0; o < MO; ++o) dout_final[eg.parent][o] += dprev[o];
          for (int i = 0; i < H; ++i) dh_final[eg.parent][i] += dh_prev[i];
        }
      }
    }
  }
}

bool clipped(double p, double epsilon) {
  return epsilon > 0.0 && (p < epsilon || p > 1.0 - epsilon);
}

}  // namespace

double reinforce_objective(const PolicyModel& model, const DatasetStats& stats,
                           const EmitConfig& ec, const Candidate& cand,
                           double advantage, double epsilon, std::vector<double>* grad) {
  (void)ec;
  const std::vector<std::size_t> bits = stats_bit_indices(stats);
  ReplayFwd fwd;
  replay_forward(model, bits, cand, fwd);

  double objective = 0.0;
  std::vector<std::array<double, MO>> dlogits(cand.steps.size());
  for (auto& a : dlogits) a.fill(0.0);

  for (std::size_t si = 0; si < cand.steps.size(); ++si) {
    const StepRecord& rec = cand.steps[si];
    if (rec.forced) continue;
    const StepFwd& f = fwd.groups[rec.group].steps[int(rec.kind)];
    if (rec.kind == StepKind::Gamma) {
      for (int d = 0; d < MO; ++d) {
        if (rec.link_total[d] == 0) continue;
        const double g = clamp_prob(f.out[d]);
        if (clipped(g, epsilon)) continue;
        const double ones = rec.link_ones[d], tot = rec.link_total[d];
        objective += advantage * (ones * safe_log(g) + (tot - ones) * safe_log(1.0 - g));
        dlogits[si][d] = advantage * (ones - tot * g);
      }
    } else {
      const double p = f.out[rec.choice];
      if (clipped(p, epsilon)) continue;
      objective += advantage * safe_log(p);
      for (int j = 0; j < f.nout; ++j)
        dlogits[si][j] = advantage * ((j == rec.choice ? 1.0 : 0.0) - f.out[j]);
    }
  }

  if (grad) {
    if (grad->size() != PolicyModel::param_count())
      grad->assign(PolicyModel::param_count(), 0.0);
    backward(model, bits, cand, fwd, dlogits, *grad);
  }
  return objective;
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * std::log(clamp_prob(p[i]) / clamp_prob(q[i]));
  }
  return kl;
}

namespace {

double kl_bernoulli(double p, double q) {
  p = clamp_prob(p);
  q = clamp_prob(q);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

}  // namespace

double ppo_gradient(const PolicyModel& cur, const PolicyModel& ref,
                    const DatasetStats& stats, const EmitConfig& ec,
                    const Candidate& cand, double advantage, double phi_step,
                    std::vector<double>* grad) {
  const std::vector<std::size_t> bits = stats_bit_indices(stats);
  ReplayFwd fc, fr;
  replay_forward(cur, bits, cand, fc);
  replay_forward(ref, bits, cand, fr);

  double kl_sum = 0.0;
  std::vector<std::array<double, MO>> dlogits(cand.steps.size());
  for (auto& a : dlogits) a.fill(0.0);

  for (std::size_t si = 0; si < cand.steps.size(); ++si) {
    const StepRecord& rec = cand.steps[si];
    if (rec.forced) continue;
    const StepFwd& c = fc.groups[rec.group].steps[int(rec.kind)];
    const StepFwd& r = fr.groups[rec.group].steps[int(rec.kind)];

    if (rec.kind == StepKind::Gamma) {
      double log_ratio = 0.0;  // log p_ref(a) - log p_cur(a) over all draws
      double kl_t = 0.0;
      for (int d = 0; d < MO; ++d) {
        if (rec.link_total[d] == 0) continue;
        const double pc = clamp_prob(c.out[d]), pr = clamp_prob(r.out[d]);
        const double ones = rec.link_ones[d], tot = rec.link_total[d];
        log_ratio += ones * (std::log(pr) - std::log(pc)) +
                     (tot - ones) * (std::log(1.0 - pr) - std::log(1.0 - pc));
        kl_t += tot * kl_bernoulli(pc, pr);
      }
      const double ratio = std::exp(std::clamp(log_ratio, -50.0, 50.0));
      for (int d = 0; d < MO; ++d) {
        if (rec.link_total[d] == 0) continue;
        const double pc = clamp_prob(c.out[d]), pr = clamp_prob(r.out[d]);
        const double ones = rec.link_ones[d], tot = rec.link_total[d];
        double dl = advantage * ratio * (ones - tot * pc);
        dl -= phi_step * tot *
              (std::log(pc / pr) - std::log((1.0 - pc) / (1.0 - pr))) * pc * (1.0 - pc);
        dlogits[si][d] = dl;
      }
      kl_sum += kl_t;
    } else {
      const int n = c.nout;
      const double pc = clamp_prob(c.out[rec.choice]);
      const double pr = clamp_prob(r.out[rec.choice]);
      const double ratio = pr / pc;
      const double kl_t = kl_categorical(std::span(c.out.data(), n),
                                         std::span(r.out.data(), n));
      kl_sum += kl_t;
      for (int j = 0; j < n; ++j) {
        double dl = advantage * ratio * ((j == rec.choice ? 1.0 : 0.0) - c.out[j]);
        dl -= phi_step * c.out[j] *
              (std::log(clamp_prob(c.out[j]) / clamp_prob(r.out[j])) - kl_t);
        dlogits[si][j] = dl;
      }
    }
  }

  if (grad) {
    if (grad->size() != PolicyModel::param_count())
      grad->assign(PolicyModel::param_count(), 0.0);
    backward(cur, bits, cand, fc, dlogits, *grad);
  }
  (void)ec;
  return kl_sum;
}

// ---- reward & baseline ----------------------------------------------------

double compute_reward(double c_b, double c_t, double c_s, double rho) {
  if (!(c_b > 0.0)) throw std::invalid_argument("compute_reward: c_b must be positive");
  if (!(c_s >= 0.0 && c_s <= 1.0))
    throw std::invalid_argument("compute_reward: c_s must be in [0,1]");
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("compute_reward: rho must be in [0,1]");
  return rho * (c_b - c_t) / c_b + (1.0 - rho) * c_s;
}

void update_baseline(BaselineState& s, double reward) {
  s.b = s.mu * s.b + (1.0 - s.mu) * reward;
  ++s.n;
}

// ---- search ---------------------------------------------------------------

namespace {

struct CandEval {
  Candidate cand;
  double reward = -1.0;
  double c_t = -1.0;
  double c_s = -1.0;
  bool built = false;
  Index idx;             // kept alive until the sink ran
  CostReport report;
};

void evaluate(const PolicyModel& model, const DatasetStats& stats,
              std::span<const Key> keys, std::span<const WorkloadOp> ops,
              const SearchConfig& cfg, std::uint64_t cand_seed, double lambda,
              bool greedy, bool want_per_block, CandEval& ev) {
  EmitConfig ec;
  ec.m = cfg.m;
  ec.index_seed = cand_seed;
  ec.max_depth = cfg.max_depth;
  ec.budget_bytes = cfg.budget_bytes;

  Rng rng(cand_seed);
  ev.cand = sample_candidate(model, stats, ec, rng, lambda, greedy);
  if (ev.cand.aborted) {
    ev.reward = -1.0;
    return;
  }
  IndexConfig ic;
  ic.m = cfg.m;
  ic.seed = cand_seed;
  ic.budget_bytes = cfg.budget_bytes;
  ic.max_depth = cfg.max_depth;
  Index idx = build_logical(ev.cand.params, stats, ic);
  materialize(idx, keys);
  finalize(idx);
  if (stored_bytes(idx) > cfg.budget_bytes) {
    ev.reward = -1.0;  // budget violation caught post-build (blooms, splits)
    return;
  }
  ev.report = run_workload(idx, ops, cfg.mode, want_per_block, keys.size());
  ev.c_t = ev.report.total_cost;
  ev.c_s = ev.report.space_utilization;
  ev.built = true;
  ev.idx = std::move(idx);
}

double lambda_at(std::uint32_t epoch, std::uint32_t epochs) {
  const double half = std::max(1u, epochs / 2);
  if (epoch >= half) return 0.0;
  return 1.0 - double(epoch) / half;
}

}  // namespace

SearchResult search(std::span<const Key> keys, std::span<const WorkloadOp> ops,
                    const SearchConfig& cfg, const PolicyModel* warm_start,
                    const SampleSink& sink) {
  if (ops.empty()) throw std::invalid_argument("search: empty workload");
  SearchResult res;
  res.model = warm_start && warm_start->initialized() ? *warm_start : PolicyModel{};
  if (!res.model.initialized()) res.model.init(derive_seed(cfg.seed, 0x6d6f64656cULL));

  const DatasetStats stats = compute_stats(keys);
  res.c_b = measure_baseline(keys, ops, cfg.mode);
  res.best_reward = -std::numeric_limits<double>::infinity();

  BaselineState bs;
  bs.mu = cfg.mu;

  auto note_best = [&](const CandEval& ev) {
    if (!ev.built || !(ev.reward > res.best_reward)) return;
    res.best_reward = ev.reward;
    res.best_params = ev.cand.params;
    res.best_ct = ev.c_t;
    res.best_cs = ev.c_s;
    res.found = true;
  };

  if (cfg.epochs == 0) {  // untrained greedy decode
    CandEval ev;
    evaluate(res.model, stats, keys, ops, cfg, derive_seed(cfg.seed, 1, 1), 0.0, true,
             bool(sink), ev);
    if (ev.built) ev.reward = compute_reward(res.c_b, ev.c_t, ev.c_s, cfg.rho);
    note_best(ev);
    if (sink && ev.built) sink(ev.idx, ev.report);
    res.trace.push_back({0, 0, ev.reward, ev.c_t, ev.c_s, ev.cand.depth,
                         ev.cand.groups.size()});
    return res;
  }

#ifdef _OPENMP
  if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
#endif

  const std::uint32_t N = std::max(1u, cfg.batch);
  std::vector<CandEval> evals(N);
  std::vector<double> advantages(N);
  std::vector<std::vector<double>> grads(N);

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lambda = lambda_at(epoch, cfg.epochs);

    // sample + build + benchmark, one exclusive context per candidate
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < long(N); ++i) {
      evals[i] = CandEval{};
      evaluate(res.model, stats, keys, ops, cfg, derive_seed(cfg.seed, epoch + 1, i + 1),
               lambda, false, bool(sink), evals[i]);
      if (evals[i].built)
        evals[i].reward = compute_reward(res.c_b, evals[i].c_t, evals[i].c_s, cfg.rho);
    }

    // rewards fold into the baseline in candidate order; sinks and the trace
    // run serially for reproducible output
    for (std::uint32_t i = 0; i < N; ++i) {
      CandEval& ev = evals[i];
      update_baseline(bs, ev.reward);
      advantages[i] = ev.reward - bs.b;
      note_best(ev);
      if (sink && ev.built) sink(ev.idx, ev.report);
      ev.idx = Index{};  // free the candidate index early
      res.trace.push_back({epoch, i, ev.reward, ev.c_t, ev.c_s, ev.cand.depth,
                           ev.cand.groups.size()});
    }

    EmitConfig ec;
    ec.m = cfg.m;
    ec.max_depth = cfg.max_depth;
    ec.budget_bytes = cfg.budget_bytes;

    if (!cfg.use_ppo) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
      for (long i = 0; i < long(N); ++i) {
        grads[i].assign(PolicyModel::param_count(), 0.0);
        EmitConfig eci = ec;
        eci.index_seed = derive_seed(cfg.seed, epoch + 1, i + 1);
        reinforce_objective(res.model, stats, eci, evals[i].cand, advantages[i],
                            cfg.epsilon, &grads[i]);
      }
      for (std::uint32_t i = 0; i < N; ++i)  // ordered sum: bit-identical
        for (std::size_t p = 0; p < res.model.w.size(); ++p)
          res.model.w[p] += cfg.sigma / N * grads[i][p];
    } else {
      const PolicyModel ref = res.model;  // sampler snapshot for this round
      std::uint64_t free_steps = 0;
      for (const auto& ev : evals)
        for (const auto& s : ev.cand.steps)
          if (!s.forced) ++free_steps;
      const double phi_step =
          free_steps ? cfg.phi * double(N) / double(free_steps) : 0.0;
      for (std::uint32_t round = 0; round < std::max(1u, cfg.ppo_rounds); ++round) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
        for (long i = 0; i < long(N); ++i) {
          grads[i].assign(PolicyModel::param_count(), 0.0);
          EmitConfig eci = ec;
          eci.index_seed = derive_seed(cfg.seed, epoch + 1, i + 1);
          ppo_gradient(res.model, ref, stats, eci, evals[i].cand, advantages[i],
                       phi_step, &grads[i]);
        }
        for (std::uint32_t i = 0; i < N; ++i)
          for (std::size_t p = 0; p < res.model.w.size(); ++p)
            res.model.w[p] += cfg.sigma / N * grads[i][p];
      }
    }
  }
  return res;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
  out << "epoch,candidate,reward,c_t,c_s,depth,groups\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.candidate << ',' << format_double(r.reward) << ','
        << format_double(r.c_t) << ',' << format_double(r.c_s) << ',' << r.depth << ','
        << r.group_count << '\n';
  }
}

// ---- reference configurations ---------------------------------------------

namespace {

void btree_rec(const DatasetStats& stats, const IndexConfig& cfg, ParameterIndex& pi,
               const std::string& path, KeyRange range, std::uint32_t level) {
  HyperParams hp;
  hp.block_type = BlockType::Ordered;
  hp.x = cfg.m;
  hp.y = 1;
  hp.alpha = 1.0;
  hp.beta = 0.5;
  const bool descend = level + 1 < cfg.max_depth &&
                       estimate_block_keys(stats, range, 1.0) > hp.alpha * cfg.m;
  pi.groups.emplace(path, hp);
  if (!descend) return;
  for (std::uint32_t s = 0; s < hp.x; ++s)
    btree_rec(stats, cfg, pi, child_group_path(path, 0, hp.x, s),
              range_slice(range, hp.x, s), level + 1);
}

}  // namespace

ParameterIndex btree_equivalent_config(const DatasetStats& stats, const IndexConfig& cfg) {
  ParameterIndex pi;
  btree_rec(stats, cfg, pi, "0", stats.root_range(), 0);
  return pi;
}

ParameterIndex hash_layer_config(const DatasetStats& stats, std::uint32_t x) {
  (void)stats;
  ParameterIndex pi;
  HyperParams root;
  root.block_type = BlockType::Unordered;
  root.x = x;
  root.y = 1;
  root.alpha = 1.0;
  root.beta = 0.5;
  pi.groups.emplace("0", root);
  HyperParams leaf;
  leaf.block_type = BlockType::Ordered;
  leaf.x = 1;
  leaf.y = 1;
  leaf.alpha = 1.0;
  leaf.beta = 0.5;
  for (std::uint32_t s = 0; s < x; ++s)
    pi.groups.emplace(child_group_path("0", 0, x, s), leaf);
  return pi;
}

ParameterIndex skiplist_config(const DatasetStats& stats, std::uint32_t bottom_y) {
  (void)stats;
  ParameterIndex pi;
  HyperParams top;
  top.block_type = BlockType::Ordered;
  top.x = 1;
  top.y = 1;
  top.alpha = 1.0;
  top.beta = 0.5;
  pi.groups.emplace("0", top);
  HyperParams bottom;
  bottom.block_type = BlockType::Ordered;
  bottom.x = 1;
  bottom.y = bottom_y;
  bottom.alpha = 1.0;
  bottom.beta = 0.5;
  const std::uint32_t gn = HyperParams::gamma_count(bottom_y);
  bottom.gamma.resize(gn);
  for (std::uint32_t d = 0; d < gn; ++d)
    bottom.gamma[d] = std::pow(0.5, double(d + 1));  // halve per doubling distance
  pi.groups.emplace("0/0", bottom);
  return pi;
}

}  // namespace nis
