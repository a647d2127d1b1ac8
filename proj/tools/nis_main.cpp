#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nis/checkpoint.hpp"
#include "nis/controller.hpp"
#include "nis/incremental.hpp"
#include "nis/index.hpp"
#include "nis/ops.hpp"
#include "nis/params.hpp"
#include "nis/workload.hpp"

namespace {

using namespace nis;

std::optional<std::uint64_t> nis_seed_env() {
  const char* v = std::getenv("NIS_SEED");
  if (!v || !*v) return std::nullopt;
  return std::stoull(v);
}

// NIS_SEED overrides every seed flag, so a whole run can be re-keyed at once
std::uint64_t effective_seed(std::uint64_t flag_value) {
  return nis_seed_env().value_or(flag_value);
}

CostMode parse_mode(const std::string& s) {
  if (s == "visit") return CostMode::VisitCount;
  if (s == "wall") return CostMode::WallClock;
  throw std::invalid_argument("unknown cost mode: " + s + " (visit|wall)");
}

Distribution parse_dist(const std::string& s) {
  if (s == "uniform64") return Distribution::Uniform;
  if (s == "lognormal") return Distribution::LogNormal;
  if (s == "zipfian") return Distribution::Zipfian;
  throw std::invalid_argument("unknown distribution: " + s +
                              " (uniform64|lognormal|zipfian)");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

void write_bench_csv(std::ostream& out, const CostReport& r) {
  out << "kind,count,total_cost,avg_cost\n";
  for (const auto& [kind, cc] : r.per_kind) {
    const double avg = cc.first ? cc.second / double(cc.first) : 0.0;
    out << kind << ',' << cc.first << ',' << format_double(cc.second) << ','
        << format_double(avg) << '\n';
  }
  if (r.op_count)
    out << "total," << r.op_count << ',' << format_double(r.total_cost) << ','
        << format_double(r.total_cost / double(r.op_count)) << '\n';
}

void write_report_csv(std::ostream& out, const IndexReport& rep) {
  out << "metric,value\n";
  out << "depth," << rep.depth << '\n';
  out << "groups," << rep.group_count << '\n';
  out << "blocks," << rep.block_count << '\n';
  out << "empty_blocks," << rep.empty_blocks << '\n';
  out << "stored_keys," << rep.stored_keys << '\n';
  out << "stored_offsets," << rep.stored_offsets << '\n';
  out << "bytes," << rep.bytes << '\n';
  out << "space_utilization," << format_double(rep.space_utilization) << '\n';
}

struct CommonIndexArgs {
  std::uint32_t m = 256;
  std::uint64_t seed = 1;
  std::uint64_t budget = 1ull << 30;
  std::uint32_t max_depth = 8;

  void attach(CLI::App* cmd) {
    cmd->add_option("--m", m, "block capacity");
    cmd->add_option("--seed", seed, "seed (NIS_SEED env overrides)");
    cmd->add_option("--budget", budget, "storage budget in bytes");
    cmd->add_option("--max-depth", max_depth, "maximum number of layers");
  }
  IndexConfig config() const {
    return IndexConfig{m, effective_seed(seed), budget, max_depth};
  }
};

int cmd_gen_data(const std::string& dist, std::uint64_t n, std::uint64_t seed,
                 double mean, double sd, double exponent, int workers,
                 const std::string& out) {
  DatasetSpec spec;
  spec.dist = parse_dist(dist);
  spec.n = n;
  spec.seed = effective_seed(seed);
  spec.lognormal_mean = mean;
  spec.lognormal_sd = sd;
  spec.zipf_exponent = exponent;
  const std::vector<Key> keys = gen_keys(spec, workers);
  write_key_file(out, keys);
  std::cout << "wrote " << keys.size() << " keys to " << out << "\n";
  return 0;
}

int cmd_gen_workload(const std::string& kind, const std::string& data,
                     std::uint64_t scale, std::uint64_t seed, const std::string& out) {
  const std::vector<Key> keys = read_key_file(data);
  const std::vector<WorkloadOp> ops =
      gen_workload(workload_kind_from_string(kind), keys, scale, effective_seed(seed));
  write_workload_file(out, ops);
  std::cout << "wrote " << ops.size() << " ops to " << out << "\n";
  return 0;
}

int cmd_build(const std::string& data, const std::string& config,
              const CommonIndexArgs& common, int workers, const std::string& out) {
  const std::vector<Key> keys = read_key_file(data);
  const ParameterIndex pi = parse_config_file(config);
  const DatasetStats stats = compute_stats(keys);

  const auto t0 = std::chrono::steady_clock::now();
  Index idx = build_logical(pi, stats, common.config());
  if (workers > 0)
    materialize_parallel(idx, keys, 0, workers);
  else
    materialize(idx, keys);
  finalize(idx);
  const auto t1 = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  const IndexReport rep = inspect(idx);
  std::cout << "depth=" << rep.depth << " groups=" << rep.group_count
            << " blocks=" << rep.block_count << " stored_keys=" << rep.stored_keys
            << " c_s=" << format_double(rep.space_utilization) << " bytes=" << rep.bytes
            << " build_ms=" << format_double(ms) << "\n";
  if (!out.empty()) {
    auto f = open_out(out);
    write_report_csv(f, rep);  // timing deliberately not persisted
  }
  return 0;
}

int cmd_search(const std::string& data, const std::string& workload, SearchConfig sc,
               const std::string& warm, const std::string& out_config,
               const std::string& out_trace, const std::string& out_model) {
  const std::vector<Key> keys = read_key_file(data);
  const std::vector<WorkloadOp> ops = read_workload_file(workload);
  sc.seed = effective_seed(sc.seed);

  PolicyModel warm_model;
  const PolicyModel* warm_ptr = nullptr;
  if (!warm.empty()) {
    warm_model = load_policy(warm);
    warm_ptr = &warm_model;
  }

  const SearchResult res = search(keys, ops, sc, warm_ptr);
  std::cout << "c_b=" << format_double(res.c_b)
            << " best_reward=" << format_double(res.best_reward)
            << " best_c_t=" << format_double(res.best_ct)
            << " best_c_s=" << format_double(res.best_cs) << " found="
            << (res.found ? 1 : 0) << "\n";

  if (!out_trace.empty()) {
    auto f = open_out(out_trace);
    write_trace_csv(f, res.trace);
  }
  if (!out_config.empty() && res.found) write_config_file(out_config, res.best_params);
  if (!out_model.empty()) save_policy(out_model, res.model);
  return 0;
}

int cmd_bench(const std::string& data, const std::string& workload,
              const std::string& config, const CommonIndexArgs& common,
              const std::string& mode, int workers, const std::string& out) {
  const std::vector<Key> keys = read_key_file(data);
  const std::vector<WorkloadOp> ops = read_workload_file(workload);
  const ParameterIndex pi = parse_config_file(config);
  const DatasetStats stats = compute_stats(keys);

  Index idx = build_logical(pi, stats, common.config());
  if (workers > 0)
    materialize_parallel(idx, keys, 0, workers);
  else
    materialize(idx, keys);
  finalize(idx);

  const CostReport rep = run_workload(idx, ops, parse_mode(mode), false, keys.size());
  std::cout << "ops=" << rep.op_count << " c_t=" << format_double(rep.total_cost)
            << " c_s=" << format_double(rep.space_utilization) << "\n";
  if (!out.empty()) {
    auto f = open_out(out);
    write_bench_csv(f, rep);
  }
  return 0;
}

// drifting-lookup episode workloads: episode e draws lookups uniformly from a
// key window that slides forward by `drift` of the sorted key space per
// episode, which is what makes incremental retuning observable
std::vector<WorkloadOp> episode_lookups(const std::vector<Key>& sorted_keys,
                                        std::uint32_t episode, std::uint64_t lookups,
                                        double window, double drift,
                                        std::uint64_t wseed) {
  const std::uint64_t n = sorted_keys.size();
  const double start = std::min(drift * episode, 1.0 - window);
  const std::uint64_t lo = std::uint64_t(start * double(n));
  const std::uint64_t hi =
      std::max<std::uint64_t>(lo + 1, std::uint64_t((start + window) * double(n)));
  Rng rng(derive_seed(wseed, episode + 1));
  std::vector<WorkloadOp> ops;
  ops.reserve(lookups);
  for (std::uint64_t i = 0; i < lookups; ++i) {
    WorkloadOp op;
    op.kind = WorkloadOp::Kind::Lookup;
    op.key = sorted_keys[lo + rng.next_below(std::min(hi, n) - lo)];
    ops.push_back(op);
  }
  return ops;
}

int cmd_episodes(const std::string& data, const std::string& mode_name,
                 std::uint32_t episodes, std::uint64_t lookups, double window,
                 double drift, std::uint64_t wseed, SearchConfig initial,
                 std::uint32_t retrain_epochs, std::uint32_t retune_epochs,
                 std::uint32_t retune_batch, std::uint32_t tau, double omega,
                 const std::string& out) {
  std::vector<Key> keys = read_key_file(data);
  std::vector<Key> sorted = keys;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty()) throw std::invalid_argument("episodes: empty dataset");

  initial.seed = effective_seed(initial.seed);
  const std::uint64_t ws = effective_seed(wseed);

  EpisodeConfig ec;
  ec.initial_search = initial;
  ec.retrain_search = initial;
  ec.retrain_search.epochs = retrain_epochs;
  ec.retune.search = initial;
  ec.retune.search.epochs = retune_epochs;
  ec.retune.search.batch = retune_batch;
  ec.outlier.tau = tau;
  ec.outlier.omega = omega;
  ec.episodes = episodes;

  const auto gen = [&](std::uint32_t e) {
    return episode_lookups(sorted, e, lookups, window, drift, ws);
  };
  const std::vector<EpisodeRow> rows =
      run_episodes(keys, gen, episode_mode_from_name(mode_name), ec);

  for (const auto& r : rows)
    std::cout << "episode=" << r.episode << " c_t=" << format_double(r.c_t)
              << " outliers=" << r.outliers << " retuned=" << r.retuned << "\n";
  if (!out.empty()) {
    auto f = open_out(out);
    write_episode_csv(f, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid block index with a learned-structure search harness"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "generate a binary key file");
  std::string gd_dist = "uniform64", gd_out;
  std::uint64_t gd_n = 0, gd_seed = 1;
  double gd_mean = 0.0, gd_sd = 0.7, gd_exp = 1.0;
  int gd_workers = 0;
  gd->add_option("--dist", gd_dist, "uniform64|lognormal|zipfian");
  gd->add_option("--n", gd_n, "number of keys")->required();
  gd->add_option("--seed", gd_seed, "seed (NIS_SEED env overrides)");
  gd->add_option("--mean", gd_mean, "lognormal mean");
  gd->add_option("--sd", gd_sd, "lognormal standard deviation");
  gd->add_option("--exponent", gd_exp, "zipfian exponent");
  gd->add_option("--workers", gd_workers, "parallel generation workers");
  gd->add_option("--out", gd_out, "output key file")->required();
  gd->callback([&] {
    rc = cmd_gen_data(gd_dist, gd_n, gd_seed, gd_mean, gd_sd, gd_exp, gd_workers, gd_out);
  });

  // gen-workload
  auto* gw = app.add_subcommand("gen-workload", "generate a workload file");
  std::string gw_kind = "w1", gw_data, gw_out;
  std::uint64_t gw_scale = 1000, gw_seed = 1;
  gw->add_option("--kind", gw_kind, "w1|w2|w3|w4");
  gw->add_option("--data", gw_data, "key file")->required();
  gw->add_option("--scale", gw_scale, "divide reference op counts by this");
  gw->add_option("--seed", gw_seed, "seed (NIS_SEED env overrides)");
  gw->add_option("--out", gw_out, "output workload file")->required();
  gw->callback([&] { rc = cmd_gen_workload(gw_kind, gw_data, gw_scale, gw_seed, gw_out); });

  // build
  auto* bd = app.add_subcommand("build", "build an index from an explicit config");
  std::string bd_data, bd_config, bd_out;
  CommonIndexArgs bd_common;
  int bd_workers = 0;
  bd->add_option("--data", bd_data, "key file")->required();
  bd->add_option("--config", bd_config, "group config file")->required();
  bd_common.attach(bd);
  bd->add_option("--workers", bd_workers, "parallel materialize workers");
  bd->add_option("--out", bd_out, "structural report CSV");
  bd->callback([&] { rc = cmd_build(bd_data, bd_config, bd_common, bd_workers, bd_out); });

  // search
  auto* se = app.add_subcommand("search", "run the structure search");
  std::string se_data, se_workload, se_mode = "visit", se_warm;
  std::string se_out_config, se_out_trace, se_out_model;
  SearchConfig se_cfg;
  se->add_option("--data", se_data, "key file")->required();
  se->add_option("--workload", se_workload, "workload file")->required();
  se->add_option("--rho", se_cfg.rho, "latency/space reward mix");
  se->add_option("--sigma", se_cfg.sigma, "learning rate");
  se->add_option("--epsilon", se_cfg.epsilon, "probability clip");
  se->add_option("--mu", se_cfg.mu, "baseline aging");
  se->add_option("--phi", se_cfg.phi, "KL penalty weight");
  se->add_option("--batch", se_cfg.batch, "candidates per epoch");
  se->add_option("--epochs", se_cfg.epochs, "training epochs (0 = greedy decode)");
  se->add_flag("--ppo", se_cfg.use_ppo, "reuse rollouts with ratio + KL penalty");
  se->add_option("--ppo-rounds", se_cfg.ppo_rounds, "update rounds per batch");
  se->add_option("--m", se_cfg.m, "block capacity");
  se->add_option("--budget", se_cfg.budget_bytes, "storage budget in bytes");
  se->add_option("--max-depth", se_cfg.max_depth, "maximum number of layers");
  se->add_option("--seed", se_cfg.seed, "seed (NIS_SEED env overrides)");
  se->add_option("--workers", se_cfg.workers, "parallel candidate evaluation workers");
  se->add_option("--cost-mode", se_mode, "visit|wall");
  se->add_option("--warm-start", se_warm, "policy checkpoint to start from");
  se->add_option("--out-config", se_out_config, "best config file");
  se->add_option("--out-trace", se_out_trace, "reward trace CSV");
  se->add_option("--out-model", se_out_model, "policy checkpoint");
  se->callback([&] {
    se_cfg.mode = parse_mode(se_mode);
    rc = cmd_search(se_data, se_workload, se_cfg, se_warm, se_out_config, se_out_trace,
                    se_out_model);
  });

  // bench
  auto* be = app.add_subcommand("bench", "benchmark a workload against a config");
  std::string be_data, be_workload, be_config, be_mode = "visit", be_out;
  CommonIndexArgs be_common;
  int be_workers = 0;
  be->add_option("--data", be_data, "key file")->required();
  be->add_option("--workload", be_workload, "workload file")->required();
  be->add_option("--config", be_config, "group config file")->required();
  be_common.attach(be);
  be->add_option("--cost-mode", be_mode, "visit|wall");
  be->add_option("--workers", be_workers, "parallel materialize workers");
  be->add_option("--out", be_out, "per-kind cost CSV");
  be->callback([&] {
    rc = cmd_bench(be_data, be_workload, be_config, be_common, be_mode, be_workers,
                   be_out);
  });

  // episodes
  auto* ep = app.add_subcommand("episodes", "drifting-workload episode protocol");
  std::string ep_data, ep_mode = "default", ep_cost = "visit", ep_out;
  std::uint32_t ep_count = 5, ep_retrain = 10, ep_retune = 6, ep_retune_batch = 4;
  std::uint32_t ep_tau = 3;
  std::uint64_t ep_lookups = 2000, ep_wseed = 7;
  double ep_window = 0.4, ep_drift = 0.15, ep_omega = 0.5;
  SearchConfig ep_cfg;
  ep_cfg.epochs = 20;
  ep_cfg.batch = 8;
  ep->add_option("--data", ep_data, "key file")->required();
  ep->add_option("--mode", ep_mode, "default|inc|trained");
  ep->add_option("--episodes", ep_count, "number of episodes");
  ep->add_option("--lookups", ep_lookups, "lookups per episode");
  ep->add_option("--window", ep_window, "hot window width, fraction of key space");
  ep->add_option("--drift", ep_drift, "window shift per episode");
  ep->add_option("--wseed", ep_wseed, "workload seed (NIS_SEED env overrides)");
  ep->add_option("--epochs", ep_cfg.epochs, "initial search epochs");
  ep->add_option("--batch", ep_cfg.batch, "search batch size");
  ep->add_option("--retrain-epochs", ep_retrain, "trained-mode re-search epochs");
  ep->add_option("--retune-epochs", ep_retune, "inc-mode mini-search epochs");
  ep->add_option("--retune-batch", ep_retune_batch, "inc-mode mini-search batch");
  ep->add_option("--tau", ep_tau, "consecutive mismatch tolerance");
  ep->add_option("--omega", ep_omega, "relative growth tolerance");
  ep->add_option("--m", ep_cfg.m, "block capacity");
  ep->add_option("--budget", ep_cfg.budget_bytes, "storage budget in bytes");
  ep->add_option("--max-depth", ep_cfg.max_depth, "maximum number of layers");
  ep->add_option("--seed", ep_cfg.seed, "search seed (NIS_SEED env overrides)");
  ep->add_option("--workers", ep_cfg.workers, "parallel candidate evaluation workers");
  ep->add_option("--cost-mode", ep_cost, "visit|wall");
  ep->add_option("--out", ep_out, "episode CSV");
  ep->callback([&] {
    ep_cfg.mode = parse_mode(ep_cost);
    rc = cmd_episodes(ep_data, ep_mode, ep_count, ep_lookups, ep_window, ep_drift,
                      ep_wseed, ep_cfg, ep_retrain, ep_retune, ep_retune_batch, ep_tau,
                      ep_omega, ep_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const BuildError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
