#ifndef IRSS_RUNNER_HPP_
#define IRSS_RUNNER_HPP_

// Experiment execution behind the CLI verbs: dataset construction, seed
// fan-out across threads, metrics/summary persistence, grid sweeps, and the
// bound report. Each seed's artifacts are assembled after the joins in seed
// order, so repeated invocations write byte-identical files.

#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irss/bound.hpp"
#include "irss/config.hpp"
#include "irss/dataset.hpp"
#include "irss/trainer.hpp"

namespace irss {

namespace fs = std::filesystem;

inline TrainConfig apply_method(const TrainConfig& base, const std::string& method) {
  TrainConfig tc = base;
  if (method == "erm") return baseline_config(BaselineKind::erm, tc);
  if (method == "irm") return baseline_config(BaselineKind::irm_v1, tc);
  if (method == "adv-only") return baseline_config(BaselineKind::adv_only, tc);
  if (method == "irss-irmv1") {
    tc.weights.penalty = PenaltyKind::irmv1;
    return tc;
  }
  if (method == "irss-birm") {
    tc.weights.penalty = PenaltyKind::birm;
    return tc;
  }
  if (method == "config") return tc;  // honor the config's train section
  throw config_error("unknown method '" + method + "'");
}

inline Dataset build_train_set(const ExperimentConfig& cfg, std::uint64_t data_seed) {
  Dataset ds;
  for (std::size_t e = 0; e < cfg.env_count(); ++e) {
    if (cfg.family == "scm")
      ds.append(sample_scm(cfg.scm, e, cfg.n_per_env_train, mix_seed(data_seed, e)));
    else
      ds.append(sample_styled_images(cfg.styled, e, cfg.n_per_env_train,
                                     mix_seed(data_seed, e)));
  }
  return ds;
}

inline Dataset build_test_set(const ExperimentConfig& cfg, std::uint64_t data_seed) {
  std::uint64_t seed = mix_seed(data_seed, 0x7e57);
  int test_env_id = int(cfg.env_count());
  if (cfg.family == "scm") {
    TestEnvReport test_env = make_ood_test_env(cfg.scm, cfg.alphas, cfg.sigma_test);
    return sample_scm_env(cfg.scm, test_env.env, test_env_id, cfg.n_test, seed);
  }
  StyleImageConfig test_cfg = cfg.styled;
  test_cfg.rho = {cfg.rho_test};
  Dataset ds = sample_styled_images(test_cfg, 0, cfg.n_test, seed);
  for (Sample& s : ds.samples) s.true_env = test_env_id;
  return ds;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  RunState state;
  EvalReport train_eval;
  EvalReport test_eval;
};

inline SeedOutcome run_one_seed(const ExperimentConfig& cfg, const TrainConfig& base,
                                std::uint64_t seed) {
  std::uint64_t data_seed = mix_seed(seed, 0xda7a);
  Dataset train_set = build_train_set(cfg, data_seed);
  Dataset test_set = build_test_set(cfg, data_seed);
  TrainConfig tc = base;
  tc.seed = seed;
  SeedOutcome out;
  out.seed = seed;
  out.state = train(train_set, cfg.arch, tc, &test_set);
  out.train_eval = evaluate(out.state.params, cfg.arch, train_set, mix_seed(seed, 0xe7a1));
  out.test_eval = evaluate(out.state.params, cfg.arch, test_set, mix_seed(seed, 0xe7a2));
  return out;
}

inline std::vector<SeedOutcome> run_seeds(const ExperimentConfig& cfg,
                                          const TrainConfig& base,
                                          std::span<const std::uint64_t> seeds) {
  std::vector<std::future<SeedOutcome>> futs;
  futs.reserve(seeds.size());
  for (std::uint64_t seed : seeds)
    futs.push_back(std::async(std::launch::async,
                              [&cfg, &base, seed] { return run_one_seed(cfg, base, seed); }));
  std::vector<SeedOutcome> out;
  out.reserve(seeds.size());
  for (auto& f : futs) out.push_back(f.get());
  return out;
}

inline const char* kMetricsHeader =
    "run_id,seed,iter,loss_total,loss_erm,loss_irm,loss_ent,loss_adv,"
    "train_acc,ood_acc,style_probe_acc,env_inertia";

inline std::string metrics_csv_text(const std::string& run_id,
                                    std::span<const SeedOutcome> outcomes) {
  std::string text = kMetricsHeader;
  text += "\n";
  for (const SeedOutcome& oc : outcomes) {
    for (const MetricsRow& r : oc.state.history) {
      double fields[] = {r.loss_total, r.loss_erm, r.loss_irm,       r.loss_ent,
                         r.loss_adv,   r.train_acc, r.ood_acc,        r.style_probe_acc,
                         r.env_inertia};
      for (double v : fields)
        if (!std::isfinite(v)) throw contract_error("metrics: non-finite field");
      text += run_id + "," + std::to_string(oc.seed) + "," + std::to_string(r.iter);
      for (double v : fields) {
        text += ",";
        text += fmt_double(v);
      }
      text += "\n";
    }
  }
  return text;
}

inline json summary_json(const std::string& run_id, const std::string& method,
                         std::span<const SeedOutcome> outcomes) {
  json per_seed = json::array();
  std::vector<double> train_accs, ood_accs, probes;
  for (const SeedOutcome& oc : outcomes) {
    per_seed.push_back(json{{"seed", oc.seed},
                            {"train_acc", oc.train_eval.acc},
                            {"ood_acc", oc.test_eval.acc},
                            {"style_probe_acc", oc.test_eval.style_probe_acc},
                            {"ood_risk", 1.0 - oc.test_eval.acc}});
    train_accs.push_back(oc.train_eval.acc);
    ood_accs.push_back(oc.test_eval.acc);
    probes.push_back(oc.test_eval.style_probe_acc);
  }
  auto [tm, ts] = mean_sd(train_accs);
  auto [om, os] = mean_sd(ood_accs);
  auto [pm, ps] = mean_sd(probes);
  return json{{"run_id", run_id},
              {"method", method},
              {"per_seed", per_seed},
              {"train_acc_mean", tm},
              {"train_acc_sd", ts},
              {"ood_acc_mean", om},
              {"ood_acc_sd", os},
              {"style_probe_acc_mean", pm},
              {"style_probe_acc_sd", ps}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot write " + path.string());
  os << text;
}

struct RunOutput {
  fs::path dir;
  json summary;
};

// One experiment run: all seeds of one method, one output directory.
inline RunOutput cli_run(const json& raw, const std::string& method,
                         std::optional<std::string> out_dir_override = {},
                         std::optional<std::vector<std::uint64_t>> seeds_override = {}) {
  ExperimentConfig cfg = load_experiment_config(raw);
  if (out_dir_override) cfg.out_dir = *out_dir_override;
  if (seeds_override) cfg.seeds = *seeds_override;
  cfg.resolved["out_dir"] = cfg.out_dir;
  cfg.resolved["seeds"] = cfg.seeds;

  TrainConfig tc = apply_method(cfg.train, method);
  std::vector<SeedOutcome> outcomes = run_seeds(cfg, tc, cfg.seeds);

  std::string run_id = method;
  RunOutput out;
  out.dir = cfg.out_dir;
  write_text(out.dir / "config.resolved.json", cfg.resolved.dump(2) + "\n");
  write_text(out.dir / "metrics.csv", metrics_csv_text(run_id, outcomes));
  out.summary = summary_json(run_id, method, outcomes);
  write_text(out.dir / "summary.json", out.summary.dump(2) + "\n");
  return out;
}

// Cartesian sweep over dotted-path lists, one run directory per cell per
// seed, aggregated into sweep.csv.
inline fs::path cli_sweep(const json& raw, const std::string& method, const json& grid,
                          std::optional<std::string> out_dir_override = {}) {
  if (!grid.is_object() || grid.empty())
    throw config_error("sweep: grid must be a non-empty object of path -> values");
  std::vector<std::string> keys;
  std::vector<std::vector<json>> values;
  for (auto& [k, v] : grid.items()) {
    if (!v.is_array() || v.empty())
      throw config_error("sweep: grid entry '" + k + "' must be a non-empty array");
    keys.push_back(k);
    values.push_back(std::vector<json>(v.begin(), v.end()));
  }

  ExperimentConfig base = load_experiment_config(raw);
  fs::path out_dir = out_dir_override ? *out_dir_override : base.out_dir;
  std::vector<std::uint64_t> seeds = base.seeds;

  std::size_t n_cells = 1;
  for (auto& v : values) n_cells *= v.size();

  struct Cell {
    std::size_t index;
    std::vector<json> assignment;
    std::vector<double> ood_accs;
  };
  std::vector<Cell> cells;
  for (std::size_t ci = 0; ci < n_cells; ++ci) {
    Cell cell;
    cell.index = ci;
    std::size_t rem = ci;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      cell.assignment.push_back(values[k][rem % values[k].size()]);
      rem /= values[k].size();
    }
    cells.push_back(std::move(cell));
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    std::future<RunOutput> fut;
  };
  std::vector<Job> jobs;
  for (Cell& cell : cells) {
    json cell_raw = raw;
    for (std::size_t k = 0; k < keys.size(); ++k)
      apply_override(cell_raw, keys[k] + "=" + cell.assignment[k].dump());
    for (std::uint64_t seed : seeds) {
      fs::path dir = out_dir / ("cell_" + std::to_string(cell.index)) /
                     ("seed_" + std::to_string(seed));
      jobs.push_back({cell.index, seed,
                      std::async(std::launch::async, [cell_raw, method, dir, seed] {
                        return cli_run(cell_raw, method, dir.string(),
                                       std::vector<std::uint64_t>{seed});
                      })});
    }
  }
  for (Job& job : jobs) {
    RunOutput ro = job.fut.get();
    cells[job.cell].ood_accs.push_back(ro.summary["ood_acc_mean"].get<double>());
  }

  std::string csv = "cell";
  for (const std::string& k : keys) csv += "," + k;
  csv += ",ood_acc_mean,ood_acc_sd\n";
  for (const Cell& cell : cells) {
    auto [mean, sd] = mean_sd(cell.ood_accs);
    csv += std::to_string(cell.index);
    for (const json& v : cell.assignment) csv += "," + v.dump();
    csv += "," + fmt_double(mean) + "," + fmt_double(sd) + "\n";
  }
  write_text(out_dir / "sweep.csv", csv);
  return out_dir / "sweep.csv";
}

// Bound report: conditions, bound value, optional empirical confrontation.
inline json cli_bound(const json& raw, bool no_empirical,
                      std::optional<std::string> out_dir_override = {}) {
  json cfg_json = raw;
  json bound_json = cfg_json.value("bound", json::object());
  json empirical_json = cfg_json.value("empirical", json::object());
  cfg_json.erase("bound");
  cfg_json.erase("empirical");
  ExperimentConfig cfg = load_experiment_config(cfg_json);
  if (cfg.family != "scm") throw config_error("bound: data.family must be 'scm'");

  detail::require_keys(bound_json, "bound",
                       {"c", "delta", "epsilon", "beta0", "gamma", "sigma_erm"});
  BoundParams p;
  p.c = bound_json.value("c", 0.0);
  p.delta = bound_json.value("delta", 1.0);
  p.epsilon = bound_json.value("epsilon", 0.0);
  p.beta0 = bound_json.value("beta0", 0.0);
  p.gamma = bound_json.value("gamma", 0.0);
  p.sigma_erm = bound_json.value("sigma_erm", 1.0);
  p.alphas = cfg.alphas;
  p.sigma_test = cfg.sigma_test;

  detail::require_keys(empirical_json, "empirical", {"n_per_env", "n_test"});
  TestEnvReport test_env = make_ood_test_env(cfg.scm, cfg.alphas, cfg.sigma_test);
  ConditionReport conditions = check_conditions(p, cfg.scm, test_env.env);
  double bound = bound_value(p.c, conditions.k, p.delta, conditions.R);

  json report;
  report["inputs"] = json{{"c", p.c},
                          {"delta", p.delta},
                          {"epsilon", p.epsilon},
                          {"beta0", p.beta0},
                          {"gamma", p.gamma},
                          {"sigma_erm", p.sigma_erm},
                          {"alphas", p.alphas},
                          {"sigma_test", p.sigma_test}};
  report["config"] = cfg.resolved;
  report["test_env_mu"] = test_env.env.mu_e;
  report["test_env_degenerate"] = test_env.degenerate;
  report["conditions"] = conditions;
  report["bound"] = bound;
  if (no_empirical) {
    report["empirical"] = nullptr;
  } else {
    ConfrontationConfig cc;
    cc.train = cfg.train;
    cc.n_per_env = empirical_json.value("n_per_env", std::size_t(1000));
    cc.n_test = empirical_json.value("n_test", std::size_t(4000));
    cc.seeds = cfg.seeds;
    ConfrontationReport conf = empirical_confrontation(cfg.scm, test_env.env, p, cc);
    report["empirical"] = conf;
  }
  fs::path out_dir = out_dir_override ? *out_dir_override : cfg.out_dir;
  write_text(out_dir / "bound_report.json", report.dump(2) + "\n");
  return report;
}

// Dataset generation: one environment (or the eval test environment) into
// the binary dump format.
inline fs::path cli_gen_data(const json& raw, const std::string& out_path, int env_index,
                             bool test_env, std::size_t n, std::uint64_t seed) {
  ExperimentConfig cfg = load_experiment_config(raw);
  Dataset ds;
  if (test_env) {
    ExperimentConfig tmp = cfg;
    tmp.n_test = n;
    ds = build_test_set(tmp, seed);
  } else {
    if (env_index < 0 || std::size_t(env_index) >= cfg.env_count())
      throw config_error("gen-data: environment index out of range");
    if (cfg.family == "scm")
      ds = sample_scm(cfg.scm, std::size_t(env_index), n, seed);
    else
      ds = sample_styled_images(cfg.styled, std::size_t(env_index), n, seed);
  }
  fs::path p(out_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_dataset(ds, out_path);
  return p;
}

}  // namespace irss

#endif  // IRSS_RUNNER_HPP_
