#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nis/controller.hpp"
#include "nis/index.hpp"
#include "nis/ops.hpp"
#include "nis/workload.hpp"

using namespace nis;

namespace {

std::vector<Key> lognormal_keys(std::uint64_t n, std::uint64_t seed) {
  DatasetSpec spec;
  spec.dist = Distribution::LogNormal;
  spec.n = n;
  spec.seed = seed;
  return gen_keys(spec);
}

std::string config_text(const ParameterIndex& pi) {
  std::ostringstream out;
  write_config(out, pi);
  return out.str();
}

// a candidate with at least two groups and a free gamma step, for gradient
// checks that need real cross-group chains; max_links caps the Bernoulli
// counts so the objective stays small enough for finite differences
Candidate deep_candidate(const PolicyModel& model, const DatasetStats& stats,
                         const EmitConfig& ec, std::uint64_t* seed_out = nullptr,
                         std::uint64_t max_links = ~0ull) {
  for (std::uint64_t s = 1; s < 500; ++s) {
    Rng r(derive_seed(1234, s));
    Candidate c = sample_candidate(model, stats, ec, r, /*lambda=*/0.3);
    if (c.aborted || c.groups.size() < 2 || c.depth < 2) continue;
    std::uint64_t links = 0;
    for (const auto& st : c.steps)
      if (st.kind == StepKind::Gamma)
        for (int d = 0; d < PolicyModel::kMaxOut; ++d) links += st.link_total[d];
    if (links == 0 || links > max_links) continue;
    if (seed_out) *seed_out = derive_seed(1234, s);
    return c;
  }
  FAIL("no multi-group candidate found in 500 seeds");
  return {};
}

// a single-group candidate with modest link counts: the whole step sequence
// of one group, small enough that |objective| stays O(100) for fd probes
Candidate toy_candidate(const PolicyModel& model, const DatasetStats& stats,
                        const EmitConfig& ec) {
  for (std::uint64_t s = 1; s < 500; ++s) {
    Rng r(derive_seed(4321, s));
    Candidate c = sample_candidate(model, stats, ec, r, /*lambda=*/0.3);
    if (c.aborted || c.groups.size() != 1) continue;
    std::uint64_t links = 0;
    for (const auto& st : c.steps)
      if (st.kind == StepKind::Gamma)
        for (int d = 0; d < PolicyModel::kMaxOut; ++d) links += st.link_total[d];
    if (links < 50 || links > 200) continue;
    return c;
  }
  FAIL("no single-group candidate found in 500 seeds");
  return {};
}

}  // namespace

TEST_CASE("policy model layout and deterministic init") {
  PolicyModel m;
  m.init(5);
  CHECK(m.initialized());
  CHECK(m.w.size() == PolicyModel::param_count());
  // layout: heads close the parameter block
  CHECK(PolicyModel::head_offset(0) == PolicyModel::kOffHeads);
  std::size_t heads = 0;
  for (int k = 0; k < kStepsPerGroup; ++k)
    heads += std::size_t(PolicyModel::kHeadSizes[k]) * (PolicyModel::kHidden + 1);
  CHECK(PolicyModel::param_count() == PolicyModel::kOffHeads + heads);

  for (double v : m.w) {
    CHECK(v > -0.08);
    CHECK(v < 0.08);
  }
  PolicyModel m2;
  m2.init(5);
  CHECK(m.w == m2.w);
  m2.init(6);
  CHECK(m.w != m2.w);
}

TEST_CASE("sampled candidates are deterministic and well-formed") {
  auto keys = lognormal_keys(20000, 3);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(11);
  EmitConfig ec;
  ec.m = 32;
  ec.index_seed = 77;
  ec.max_depth = 4;
  ec.budget_bytes = 2u << 20;

  Rng r1(42), r2(42);
  Candidate a = sample_candidate(model, stats, ec, r1, 0.5);
  Candidate b = sample_candidate(model, stats, ec, r2, 0.5);
  CHECK(config_text(a.params) == config_text(b.params));
  REQUIRE(a.steps.size() == a.groups.size() * kStepsPerGroup);
  CHECK(a.groups[0].stats_input);
  CHECK(a.groups[0].path == "0");
  CHECK(a.groups[0].level == 0);

  // planned accounting: 48 per group, 64 per block
  std::uint64_t bytes = 0, blocks = 0;
  for (const auto& g : a.groups) {
    bytes += 48 + 64ull * g.params.y;
    blocks += g.params.y;
  }
  if (!a.aborted) {
    CHECK(a.planned_bytes == bytes);
    CHECK(a.planned_blocks == blocks);
    CHECK(a.planned_bytes <= ec.budget_bytes);
  }

  // every emitted group parses, validates, and builds
  IndexConfig cfg;
  cfg.m = ec.m;
  cfg.seed = ec.index_seed;
  cfg.max_depth = ec.max_depth;
  if (!a.aborted) {
    Index idx = build_logical(a.params, stats, cfg);
    CHECK(check_index_invariants(idx).empty());
    IndexReport rep = inspect(idx);
    CHECK(rep.group_count == a.groups.size());
    CHECK(rep.block_count == a.planned_blocks);
    CHECK(rep.depth + 1 == a.depth);
  }
}

TEST_CASE("budget aborts mark the candidate and keep the prefix") {
  auto keys = lognormal_keys(20000, 3);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(11);
  EmitConfig ec;
  ec.m = 32;
  ec.budget_bytes = 100;  // not even one 32-block group fits
  Rng r(1);
  Candidate c = sample_candidate(model, stats, ec, r, 1.0);
  CHECK(c.aborted);
  CHECK(c.groups.size() >= 1);
  CHECK(c.planned_bytes > ec.budget_bytes);
}

TEST_CASE("layer-stop rule forces leaves") {
  // 40 keys against alpha*m >= 40: every block estimate is under the stop
  // threshold, so no candidate may descend
  std::vector<Key> keys;
  for (Key k = 0; k < 40; ++k) keys.push_back(k * 97 + 5);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(2);
  EmitConfig ec;
  ec.m = 64;
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng r(derive_seed(9, s));
    Candidate c = sample_candidate(model, stats, ec, r, 1.0);
    CHECK(c.groups.size() == 1);
    CHECK(c.steps[5].kind == StepKind::Stop);
    CHECK(c.steps[5].forced);
  }
  // depth cap does the same
  auto big = lognormal_keys(20000, 3);
  DatasetStats bstats = compute_stats(big);
  EmitConfig bc;
  bc.m = 8;
  bc.max_depth = 1;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng r(derive_seed(10, s));
    Candidate c = sample_candidate(model, bstats, bc, r, 1.0);
    CHECK(c.groups.size() == 1);
    CHECK(c.depth == 1);
  }
}

TEST_CASE("greedy decode draws nothing from the rng") {
  auto keys = lognormal_keys(5000, 4);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(8);
  EmitConfig ec;
  ec.m = 16;
  Rng r(123);
  Candidate g1 = sample_candidate(model, stats, ec, r, 0.0, /*greedy=*/true);
  CHECK(r.next_u64() == Rng(123).next_u64());
  Rng r2(9999);  // any seed: greedy must not depend on it
  Candidate g2 = sample_candidate(model, stats, ec, r2, 1.0, /*greedy=*/true);
  CHECK(config_text(g1.params) == config_text(g2.params));
}

TEST_CASE("full exploration samples hyper-parameters uniformly") {
  std::vector<Key> keys;
  for (Key k = 0; k < 50; ++k) keys.push_back(k * 13);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(21);
  EmitConfig ec;
  ec.m = 16;

  int x_counts[4] = {0, 0, 0, 0};
  int type_counts[2] = {0, 0};
  const int kDraws = 1200;
  auto xv = ec.sets.x_values(ec.m);
  for (int i = 0; i < kDraws; ++i) {
    Rng r(derive_seed(31, i));
    Candidate c = sample_candidate(model, stats, ec, r, /*lambda=*/1.0);
    const HyperParams& hp = c.params.at("0");
    for (int j = 0; j < 4; ++j)
      if (hp.x == xv[j]) ++x_counts[j];
    ++type_counts[hp.block_type == BlockType::Ordered ? 0 : 1];
  }
  double chi2 = 0, expect = kDraws / 4.0;
  for (int j = 0; j < 4; ++j) chi2 += (x_counts[j] - expect) * (x_counts[j] - expect) / expect;
  CHECK(chi2 < 30.0);  // df=3; far past p=0.999
  CHECK(std::abs(type_counts[0] - kDraws / 2) < 100);
}

TEST_CASE("emitted link statistics match the built index exactly") {
  auto keys = lognormal_keys(30000, 6);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(14);
  EmitConfig ec;
  ec.m = 16;
  ec.index_seed = 555;
  ec.max_depth = 4;
  ec.budget_bytes = 4u << 20;
  std::uint64_t seed = 0;
  Candidate cand = deep_candidate(model, stats, ec, &seed);

  IndexConfig cfg;
  cfg.m = ec.m;
  cfg.seed = ec.index_seed;
  cfg.max_depth = ec.max_depth;
  Index idx = build_logical(cand.params, stats, cfg);

  // walk the built tree, recount per-distance links, and compare against the
  // sufficient statistics the emission recorded for the gradient
  std::map<std::string, const BlockGroup*> built;
  for_each_group(idx, [&](const BlockGroup& g) { built[g.path] = &g; });

  int gamma_steps = 0;
  for (std::size_t gi = 0; gi < cand.groups.size(); ++gi) {
    const StepRecord& st = cand.steps[gi * kStepsPerGroup + 6];
    REQUIRE(st.kind == StepKind::Gamma);
    auto it = built.find(cand.groups[gi].path);
    REQUIRE(it != built.end());
    const BlockGroup* g = it->second;
    std::uint32_t ones[PolicyModel::kMaxOut] = {0};
    std::uint32_t total[PolicyModel::kMaxOut] = {0};
    const std::uint32_t gn = std::uint32_t(g->params.gamma.size());
    for (std::size_t j = 0; j < g->blocks.size(); ++j)
      for (std::uint32_t d = 1; d <= gn; ++d) {
        if (j + (std::size_t(1) << d) >= g->blocks.size()) continue;
        ++total[d - 1];
        if (g->blocks[j].has_link(d)) ++ones[d - 1];
      }
    for (std::uint32_t d = 0; d < gn; ++d) {
      CHECK(st.link_total[d] == total[d]);
      CHECK(st.link_ones[d] == ones[d]);
      // and the probabilities driving those draws are the emitted gammas
      CHECK(g->params.gamma[d] == doctest::Approx(st.gamma[d]).epsilon(1e-12));
      if (total[d] > 0) ++gamma_steps;
    }
  }
  CHECK(gamma_steps > 0);  // the check above must not have been vacuous
}

// ---------------------------------------------------------------- rewards

TEST_CASE("reward mixes latency gain and space utilization") {
  CHECK(compute_reward(100, 50, 0.5, 1.0) == doctest::Approx(0.5));
  CHECK(compute_reward(100, 50, 0.25, 0.0) == doctest::Approx(0.25));
  CHECK(compute_reward(100, 200, 0.25, 0.5) == doctest::Approx(-0.375));
  CHECK(compute_reward(100, 0, 0.0, 1.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(compute_reward(0, 50, 0.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(compute_reward(100, 50, 1.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(compute_reward(100, 50, -0.1, 0.5), std::invalid_argument);
}

TEST_CASE("baseline recursion equals the exponential-aging closed form") {
  // b_n = (1-mu) * sum_i mu^(n-i) R_i, checked over many random streams
  Rng r(505);
  for (int stream = 0; stream < 1000; ++stream) {
    BaselineState s;
    s.mu = 0.5 + 0.4 * r.next_double();
    int len = 1 + int(r.next_below(40));
    std::vector<double> rewards;
    for (int i = 0; i < len; ++i) rewards.push_back(2.0 * r.next_double() - 1.0);
    for (double R : rewards) update_baseline(s, R);
    double closed = 0.0;
    for (int i = 0; i < len; ++i)
      closed += (1.0 - s.mu) * std::pow(s.mu, len - 1 - i) * rewards[i];
    CHECK(std::abs(s.b - closed) <= 1e-12 * std::max(1.0, std::abs(closed)));
    CHECK(s.n == std::uint64_t(len));
  }
  // worked example, mu = 0.8
  BaselineState s;
  update_baseline(s, 1.0);
  CHECK(s.b == doctest::Approx(0.2));
  update_baseline(s, 1.0);
  CHECK(s.b == doctest::Approx(0.36));
}

// ---------------------------------------------------------------- gradients

TEST_CASE("analytic policy gradient matches central finite differences") {
  auto keys = lognormal_keys(3000, 9);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(3);
  // keep the toy objective small: central differences at h=1e-5 have a
  // round-off floor of roughly |L| * eps / h, so |L| must stay O(100)
  EmitConfig ec;
  ec.m = 4;
  ec.index_seed = 31;
  ec.max_depth = 2;
  ec.budget_bytes = 1u << 20;
  Candidate cand = toy_candidate(model, stats, ec);

  const double A = 0.7, h = 1e-5;
  std::vector<double> grad(PolicyModel::param_count(), 0.0);
  double L0 = reinforce_objective(model, stats, ec, cand, A, 0.0, &grad);
  CHECK(L0 < 0.0);  // advantage * sum of log-probs
  CHECK(std::abs(L0) < 2000.0);

  auto eval_at = [&](const std::vector<double>& w) {
    PolicyModel m2;
    m2.w = w;
    return reinforce_objective(m2, stats, ec, cand, A, 0.0, nullptr);
  };
  const double floor = std::abs(L0) * 1e-10;  // fd noise, not gradient error

  // directional derivatives along random unit vectors
  Rng r(888);
  for (int dir = 0; dir < 6; ++dir) {
    std::vector<double> u(model.w.size());
    double norm = 0;
    for (auto& v : u) {
      v = r.next_normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<double> wp = model.w, wm = model.w;
    double want = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] /= norm;
      wp[i] += h * u[i];
      wm[i] -= h * u[i];
      want += grad[i] * u[i];
    }
    double fd = (eval_at(wp) - eval_at(wm)) / (2 * h);
    CHECK(std::abs(fd - want) < 1e-4 * std::max(std::abs(fd), std::abs(want)) + floor);
  }

  // a sample of individual coordinates with non-trivial gradient
  int checked = 0;
  for (std::size_t i = 0; i < grad.size() && checked < 120; i += 97) {
    if (std::abs(grad[i]) < 1e-4) continue;
    std::vector<double> wp = model.w, wm = model.w;
    wp[i] += h;
    wm[i] -= h;
    double fd = (eval_at(wp) - eval_at(wm)) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <
          1e-4 * std::max(std::abs(fd), std::abs(grad[i])) + floor);
    ++checked;
  }
  CHECK(checked >= 40);

  // on a larger candidate a coarser step keeps round-off in check while still
  // exposing any dropped term in the backward chain
  EmitConfig big;
  big.m = 16;
  big.max_depth = 3;
  big.budget_bytes = 1u << 20;
  Candidate bc = deep_candidate(model, stats, big);
  std::vector<double> bg(PolicyModel::param_count(), 0.0);
  double BL = reinforce_objective(model, stats, big, bc, A, 0.0, &bg);
  auto eval_big = [&](const std::vector<double>& w) {
    PolicyModel m2;
    m2.w = w;
    return reinforce_objective(m2, stats, big, bc, A, 0.0, nullptr);
  };
  const double hb = 1e-4, bfloor = std::abs(BL) * 1e-10;
  Rng rb(889);
  for (int dir = 0; dir < 4; ++dir) {
    std::vector<double> wp = model.w, wm = model.w;
    double want = 0;
    for (std::size_t i = 0; i < wp.size(); ++i) {
      double v = rb.next_normal() / 170.0;  // ~unit norm over 29k dims
      wp[i] += hb * v;
      wm[i] -= hb * v;
      want += bg[i] * v;
    }
    double fd = (eval_big(wp) - eval_big(wm)) / (2 * hb);
    CHECK(std::abs(fd - want) < 1e-3 * std::max(std::abs(fd), std::abs(want)) + bfloor);
  }
}

TEST_CASE("probability clipping freezes over-confident steps") {
  auto keys = lognormal_keys(3000, 9);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(3);
  EmitConfig ec;
  ec.m = 16;
  ec.max_depth = 3;
  Candidate cand = deep_candidate(model, stats, ec);

  // epsilon = 0.5 admits only probabilities exactly 0.5; an initialized net
  // never produces those, so every step is clipped out
  std::vector<double> grad(PolicyModel::param_count(), 0.0);
  double L = reinforce_objective(model, stats, ec, cand, 1.0, 0.5, &grad);
  CHECK(L == 0.0);
  for (double g : grad) CHECK(g == 0.0);

  // and a sane epsilon keeps most of the gradient
  double L2 = reinforce_objective(model, stats, ec, cand, 1.0, 0.05, &grad);
  CHECK(L2 < 0.0);
}

TEST_CASE("ppo at theta == theta_ref reduces to reinforce") {
  auto keys = lognormal_keys(3000, 9);
  DatasetStats stats = compute_stats(keys);
  PolicyModel model;
  model.init(4);
  EmitConfig ec;
  ec.m = 16;
  ec.max_depth = 3;
  Candidate cand = deep_candidate(model, stats, ec);

  const double A = -0.4;
  std::vector<double> g_re(PolicyModel::param_count(), 0.0);
  reinforce_objective(model, stats, ec, cand, A, 0.0, &g_re);
  std::vector<double> g_ppo(PolicyModel::param_count(), 0.0);
  double kl = ppo_gradient(model, model, stats, ec, cand, A, /*phi_step=*/3.0, &g_ppo);

  CHECK(kl == doctest::Approx(0.0).epsilon(1e-12));
  for (std::size_t i = 0; i < g_re.size(); ++i)
    CHECK(std::abs(g_ppo[i] - g_re[i]) <= 1e-10 * std::max(1.0, std::abs(g_re[i])));
}

TEST_CASE("ppo kl term pulls the policy back toward the reference") {
  auto keys = lognormal_keys(3000, 9);
  DatasetStats stats = compute_stats(keys);
  PolicyModel ref;
  ref.init(4);
  EmitConfig ec;
  ec.m = 16;
  ec.max_depth = 3;
  Candidate cand = deep_candidate(ref, stats, ec);

  PolicyModel cur = ref;
  Rng r(17);
  for (auto& w : cur.w) w += 0.02 * r.next_normal();

  std::vector<double> grad(PolicyModel::param_count(), 0.0);
  double kl0 = ppo_gradient(cur, ref, stats, ec, cand, /*advantage=*/0.0, 1.0, &grad);
  CHECK(kl0 > 0.0);

  // an ascent step on (-phi * KL) must shrink the divergence once the step is
  // small enough; gradient entries scale with link counts, so size it off the
  // largest one and back off if curvature bites
  double ginf = 0.0;
  for (double g : grad) ginf = std::max(ginf, std::abs(g));
  REQUIRE(ginf > 0.0);
  double step = 1e-3 / ginf, best = kl0;
  for (int tries = 0; tries < 4 && best >= kl0; ++tries, step /= 10.0) {
    PolicyModel moved = cur;
    for (std::size_t i = 0; i < moved.w.size(); ++i) moved.w[i] += step * grad[i];
    best = ppo_gradient(moved, ref, stats, ec, cand, 0.0, 1.0, nullptr);
  }
  CHECK(best < kl0);
}

TEST_CASE("categorical kl against direct summation") {
  // hand value: KL((.5,.5) || (.9,.1))
  std::vector<double> p = {0.5, 0.5}, q = {0.9, 0.1};
  CHECK(kl_categorical(p, q) == doctest::Approx(0.510825623765991).epsilon(1e-12));
  CHECK(kl_categorical(p, p) == doctest::Approx(0.0));

  Rng r(606);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + r.next_below(7);
    std::vector<double> a(n), b(n);
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = 0.05 + r.next_double();
      b[i] = 0.05 + r.next_double();
      sa += a[i];
      sb += b[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    long double direct = 0;
    for (std::size_t i = 0; i < n; ++i) direct += a[i] * std::log(a[i] / b[i]);
    CHECK(std::abs(kl_categorical(a, b) - double(direct)) <= 1e-12);
    CHECK(kl_categorical(a, b) >= -1e-15);  // Gibbs
  }
}

// ---------------------------------------------------------------- search loop

TEST_CASE("search improves on random candidates and is reproducible") {
  auto keys = lognormal_keys(5000, 15);
  auto ops = gen_workload(WorkloadKind::W1, keys, 400, 20);

  SearchConfig sc;
  sc.m = 32;
  sc.batch = 4;
  sc.epochs = 4;
  sc.budget_bytes = 2u << 20;
  sc.max_depth = 4;
  sc.seed = 99;

  SearchResult res = search(keys, ops, sc);
  REQUIRE(res.found);
  CHECK(res.c_b == doctest::Approx(400.0 * keys.size()));  // scans, no early exit
  CHECK(res.trace.size() == sc.epochs * sc.batch);
  double best = -2;
  for (const auto& row : res.trace) best = std::max(best, row.reward);
  CHECK(res.best_reward == doctest::Approx(best));
  CHECK(res.best_ct > 0);

  // the returned config benchmarks to exactly the reward it claims
  IndexConfig cfg;
  cfg.m = sc.m;
  cfg.seed = 0;  // overwritten below: reward must be seed-consistent
  // reproducibility: an identical run is identical everywhere
  SearchResult res2 = search(keys, ops, sc);
  CHECK(config_text(res2.best_params) == config_text(res.best_params));
  CHECK(res2.best_reward == res.best_reward);
  REQUIRE(res2.trace.size() == res.trace.size());
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    CHECK(res2.trace[i].reward == res.trace[i].reward);
    CHECK(res2.trace[i].c_t == res.trace[i].c_t);
  }

  // ppo path runs and stays reproducible
  sc.use_ppo = true;
  sc.ppo_rounds = 2;
  sc.epochs = 2;
  SearchResult p1 = search(keys, ops, sc);
  SearchResult p2 = search(keys, ops, sc);
  CHECK(p1.best_reward == p2.best_reward);
  CHECK(config_text(p1.best_params) == config_text(p2.best_params));

  CHECK_THROWS_AS(search(keys, std::span<const WorkloadOp>{}, sc),
                  std::invalid_argument);
}

TEST_CASE("epochs=0 benchmarks the greedy decode") {
  auto keys = lognormal_keys(4000, 16);
  auto ops = gen_workload(WorkloadKind::W1, keys, 200, 21);
  SearchConfig sc;
  sc.m = 32;
  sc.epochs = 0;
  sc.budget_bytes = 256u << 20;  // greedy untrained decode picks wide fanouts
  SearchResult res = search(keys, ops, sc);
  CHECK(res.found);
  CHECK(res.best_ct > 0);
  SearchResult res2 = search(keys, ops, sc);
  CHECK(config_text(res.best_params) == config_text(res2.best_params));
}

TEST_CASE("trace csv layout") {
  std::vector<TraceRow> rows = {{0, 1, 0.5, 10.0, 0.25, 2, 7}};
  std::ostringstream out;
  write_trace_csv(out, rows);
  std::string text = out.str();
  CHECK(text.rfind("epoch,candidate,reward,c_t,c_s,depth,groups\n", 0) == 0);
  CHECK(text.find("0,1,0.5,10,0.25,2,7") != std::string::npos);
}

// ---------------------------------------------------------------- fixed shapes

TEST_CASE("btree-equivalent config has the btree shape") {
  auto keys = lognormal_keys(20000, 25);
  DatasetStats stats = compute_stats(keys);
  IndexConfig cfg;
  cfg.m = 32;
  ParameterIndex pi = btree_equivalent_config(stats, cfg);
  for (const auto& [path, hp] : pi.groups) {
    CHECK(hp.block_type == BlockType::Ordered);
    CHECK(hp.y == 1);
    CHECK(hp.x == cfg.m);
    CHECK(hp.alpha == 1.0);
    CHECK(hp.beta == 0.5);
  }
  Index idx = build_logical(pi, stats, cfg);
  for_each_group(idx, [&](const BlockGroup& g) {
    CHECK(g.blocks.size() == 1);  // one block per group
    for (const auto& b : g.blocks)
      if (!b.bottom()) CHECK(b.children.size() == cfg.m);  // full fanout
  });
  materialize(idx, keys);
  finalize(idx);
  CHECK(check_index_invariants(idx).empty());
  // leaves respect the layer-stop rule
  for_each_group(idx, [&](const BlockGroup& g) {
    if (g.is_bottom()) CHECK(g.est_keys <= double(cfg.m) + 1e-9);
  });
}

TEST_CASE("single-layer hash config bounds every lookup by two visits") {
  auto keys = lognormal_keys(8000, 26);
  DatasetStats stats = compute_stats(keys);
  ParameterIndex pi = hash_layer_config(stats, 8);
  CHECK(pi.at("0").block_type == BlockType::Unordered);
  CHECK(pi.at("0").y == 1);
  CHECK(pi.at("0").x == 8);
  CHECK(pi.groups.size() == 9);  // root + x buckets

  IndexConfig cfg;
  cfg.m = 4096;
  Index idx = build_logical(pi, stats, cfg);
  materialize(idx, keys);
  finalize(idx);
  IndexReport rep = inspect(idx);
  CHECK(rep.depth == 1);
  for (std::size_t i = 0; i < keys.size(); i += 11) {
    QueryResult q = lookup(idx, keys[i]);
    CHECK(q.found);
    CHECK(q.visited_blocks <= 2);
  }
}

TEST_CASE("skip-list config stacks single-group layers with doubled link decay") {
  auto keys = lognormal_keys(8000, 27);
  DatasetStats stats = compute_stats(keys);
  ParameterIndex pi = skiplist_config(stats, 64);

  IndexConfig cfg;
  cfg.m = 2048;
  Index idx = build_logical(pi, stats, cfg);
  // one group per layer, y strictly decreasing upward
  std::map<std::uint32_t, std::vector<const BlockGroup*>> layers;
  for_each_group(idx, [&](const BlockGroup& g) { layers[g.level].push_back(&g); });
  REQUIRE(layers.size() >= 2);
  for (const auto& [level, gs] : layers) CHECK(gs.size() == 1);
  for (std::uint32_t l = 1; l < layers.size(); ++l)
    CHECK(layers[l - 1][0]->params.y < layers[l][0]->params.y);

  // bottom layer: classic skip-list decay, distance 2^(d+1) kept with 2^-(d+1)
  const HyperParams& bottom = layers[std::uint32_t(layers.size() - 1)][0]->params;
  CHECK(bottom.y == 64);
  REQUIRE(bottom.gamma.size() == 6);
  for (std::size_t d = 0; d < bottom.gamma.size(); ++d)
    CHECK(bottom.gamma[d] == doctest::Approx(std::pow(0.5, double(d + 1))));

  materialize(idx, keys);
  finalize(idx);
  CHECK(check_index_invariants(idx).empty());
}
