// Experiment runner CLI. Verbs:
//   run       train one method across seeds, write metrics/summary
//   sweep     grid sweep over dotted config paths
//   bound     risk lower-bound report (optionally with the empirical run)
//   gen-data  dump a synthetic dataset to the binary format
//
// Exit codes: 0 ok, 1 runtime failure (message carries the iteration),
// 2 invalid configuration (message carries the field path).

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irss/runner.hpp"

namespace {

irss::json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw irss::config_error("cannot read config file " + path);
  return irss::json::parse(is);
}

irss::json load_config(const std::string& path, const std::vector<std::string>& sets) {
  irss::json cfg = path.empty() ? irss::json::object() : load_json_file(path);
  for (const std::string& s : sets) irss::apply_override(cfg, s);
  return cfg;
}

std::optional<std::vector<std::uint64_t>> parse_seeds(const std::string& csv) {
  if (csv.empty()) return std::nullopt;
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto comma = csv.find(',', start);
    std::string tok = csv.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (seeds.empty()) throw irss::config_error("--seeds: no seeds parsed");
  return seeds;
}

std::optional<std::string> opt_str(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IRSS out-of-distribution training lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method = "config", seeds_csv, grid_spec, data_out;
  std::vector<std::string> sets;
  bool no_empirical = false, gen_test_env = false;
  int gen_env = 0;
  std::size_t gen_n = 1000;
  std::uint64_t gen_seed = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", sets, "override: dotted.path=value")->take_all();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seeds", seeds_csv, "comma-separated seed list");
  };

  CLI::App* run = app.add_subcommand("run", "train and evaluate one method");
  add_common(run);
  run->add_option("--method", method,
                  "erm|irm|adv-only|irss-irmv1|irss-birm|config (default: config)");

  CLI::App* sweep = app.add_subcommand("sweep", "grid sweep over config paths");
  add_common(sweep);
  sweep->add_option("--method", method, "method preset applied to every cell");
  sweep->add_option("--grid", grid_spec, "grid JSON (inline or @file)")->required();

  CLI::App* bound = app.add_subcommand("bound", "risk lower-bound report");
  add_common(bound);
  bound->add_flag("--no-empirical", no_empirical, "skip the empirical confrontation");

  CLI::App* gen = app.add_subcommand("gen-data", "dump a synthetic dataset");
  add_common(gen);
  gen->add_option("--env", gen_env, "training environment index");
  gen->add_flag("--test-env", gen_test_env, "generate the eval test environment");
  gen->add_option("--n", gen_n, "sample count");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--data-out", data_out, "output dataset file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    irss::json cfg = load_config(config_path, sets);
    auto seeds = parse_seeds(seeds_csv);
    if (run->parsed()) {
      irss::RunOutput out = irss::cli_run(cfg, method, opt_str(out_dir), seeds);
      std::cout << "run complete: " << out.dir.string() << "\n"
                << out.summary.dump(2) << "\n";
    } else if (sweep->parsed()) {
      irss::json grid = grid_spec.starts_with("@") ? load_json_file(grid_spec.substr(1))
                                                   : irss::json::parse(grid_spec);
      if (seeds) cfg["seeds"] = *seeds;
      auto csv = irss::cli_sweep(cfg, method, grid, opt_str(out_dir));
      std::cout << "sweep complete: " << csv.string() << "\n";
    } else if (bound->parsed()) {
      if (seeds) cfg["seeds"] = *seeds;
      irss::json report = irss::cli_bound(cfg, no_empirical, opt_str(out_dir));
      std::cout << report.dump(2) << "\n";
    } else if (gen->parsed()) {
      auto path = irss::cli_gen_data(cfg, data_out, gen_env, gen_test_env, gen_n, gen_seed);
      std::cout << "dataset written: " << path.string() << "\n";
    }
  } catch (const irss::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const irss::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
