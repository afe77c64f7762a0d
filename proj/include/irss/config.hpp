#ifndef IRSS_CONFIG_HPP_
#define IRSS_CONFIG_HPP_

// Experiment configuration: JSON in, defaults merged, unknown keys rejected
// with their field path, dotted-path overrides, and a resolved form that
// round-trips byte-identically.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "irss/common.hpp"
#include "irss/layers.hpp"
#include "irss/scm.hpp"
#include "irss/styled.hpp"
#include "irss/trainer.hpp"

namespace irss {

using nlohmann::json;

namespace detail {

inline void require_keys(const json& obj, const std::string& path,
                         const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw config_error(path + ": expected an object");
  for (auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw config_error(path + "." + key + ": unknown key");
}

// User values win; objects merge recursively, everything else is replaced.
inline json deep_merge(json base, const json& user) {
  if (!base.is_object() || !user.is_object()) return user;
  for (auto& [key, value] : user.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      base[key] = deep_merge(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

}  // namespace detail

inline json scm_data_defaults() {
  return json{
      {"family", "scm"},
      {"d_c", 5},
      {"d_e", 5},
      {"mu_c", json::array()},   // empty = constant 0.6 per coordinate
      {"sigma_c", 1.0},
      {"envs",
       json::array({json{{"mu_e", json::array()}, {"sigma_e", 0.3}},
                    json{{"mu_e", json::array()}, {"sigma_e", 0.6}},
                    json{{"mu_e", json::array()}, {"sigma_e", 1.0}}})},
      {"eta", 0.5},
      {"mixing_seed", 9001},
      {"n_per_env_train", 500},
      {"n_test", 2000},
  };
}

inline json styled_data_defaults() {
  return json{
      {"family", "styled"},
      {"side", 16},
      {"classes", 2},
      {"styles", json::array({json{{"gain", 1.0}, {"bias", 0.0}, {"tex_amp", 0.0}, {"tex_freq", 0.0}},
                              json{{"gain", 1.0}, {"bias", 0.4}, {"tex_amp", 0.5}, {"tex_freq", 4.0}}})},
      {"n_motifs", 2},
      {"rho", json::array({0.95, 0.75})},
      {"sigma_pix", 0.05},
      {"n_per_env_train", 500},
      {"n_test", 2000},
  };
}

inline json experiment_defaults(const std::string& family) {
  json cfg;
  cfg["data"] = family == "styled" ? styled_data_defaults() : scm_data_defaults();
  if (family == "styled") {
    cfg["model"] = json{
        {"extractor",
         json::array({json{{"type", "conv2d"}, {"out", 6}, {"kernel", 3}},
                      json{{"type", "relu"}},
                      json{{"type", "meanpool2"}},
                      json{{"type", "conv2d"}, {"out", 12}, {"kernel", 3}},
                      json{{"type", "relu"}},
                      json{{"type", "flatten"}},
                      json{{"type", "affine"}, {"out", 16}},
                      json{{"type", "relu"}}})},
        {"sdf_taps", json::array({1, 4})},
    };
  } else {
    cfg["model"] = json{
        {"extractor", json::array({json{{"type", "affine"}, {"out", 16}},
                                   json{{"type", "relu"}},
                                   json{{"type", "affine"}, {"out", 8}},
                                   json{{"type", "relu"}}})},
        {"sdf_taps", json::array()},
    };
  }
  cfg["train"] = json{
      {"lambda_adv", 0.5},
      {"lambda_ent", 0.1},
      {"lambda_irm", 10.0},
      {"penalty", "irmv1"},
      {"entropy_sign", "minimize_entropy"},
      {"S", family == "styled" ? 2 : 1},
      {"k_env", 3},
      {"bigsteps", 2},
      {"steps", 150},
      {"batch_size", 64},
      {"optimizer", json{{"kind", "adam"}, {"lr", 1e-3}, {"momentum", 0.9}}},
      {"birm", json{{"steps", 5}, {"lr", 0.1}}},
      {"env_source", "cluster"},
      {"env_cluster_full_set", false},
      {"disc_steps", 1},
      {"disc_lr", 0.2},
      {"log_every", 10},
  };
  if (family == "styled")
    cfg["eval"] = json{{"rho_test", 0.1}};
  else
    cfg["eval"] = json{{"alphas", json::array({1.0, 0.0, 0.0})}, {"sigma_test", 0.3}};
  cfg["out_dir"] = "runs/exp";
  cfg["seeds"] = json::array({1, 2, 3, 4, 5});
  return cfg;
}

struct ExperimentConfig {
  json resolved;
  std::string family;
  SCMConfig scm;
  StyleImageConfig styled;
  std::size_t n_per_env_train = 0;
  std::size_t n_test = 0;
  Architecture arch;  // classes/styles filled from data + train sections
  TrainConfig train;
  std::vector<double> alphas;  // scm eval
  double sigma_test = 0.3;
  double rho_test = 0.1;  // styled eval
  std::string out_dir;
  std::vector<std::uint64_t> seeds;

  std::size_t env_count() const {
    return family == "styled" ? styled.rho.size() : scm.envs.size();
  }
};

namespace detail {

inline std::vector<LayerSpec> parse_extractor(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw config_error(path + ": expected an array");
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& L = arr[i];
    std::string lp = path + "[" + std::to_string(i) + "]";
    require_keys(L, lp, {"type", "out", "kernel"});
    std::string type = L.at("type").get<std::string>();
    LayerSpec spec{};
    if (type == "affine") {
      spec.kind = LayerKind::affine;
      spec.out = L.at("out").get<std::size_t>();
    } else if (type == "relu") {
      spec.kind = LayerKind::relu;
    } else if (type == "conv2d") {
      spec.kind = LayerKind::conv2d;
      spec.out = L.at("out").get<std::size_t>();
      spec.kernel = L.at("kernel").get<std::size_t>();
    } else if (type == "meanpool2") {
      spec.kind = LayerKind::meanpool2;
    } else if (type == "flatten") {
      spec.kind = LayerKind::flatten;
    } else {
      throw config_error(lp + ".type: unknown layer type '" + type + "'");
    }
    out.push_back(spec);
  }
  return out;
}

inline std::vector<double> const_vec(std::size_t n, double v) {
  return std::vector<double>(n, v);
}

}  // namespace detail

// Parses and validates a raw config (defaults already merged by the caller
// or fetched here when family is recognizable). Throws config_error with a
// field path on any violation.
inline ExperimentConfig load_experiment_config(const json& user) {
  std::string family = "scm";
  if (user.contains("data") && user["data"].contains("family"))
    family = user["data"]["family"].get<std::string>();
  if (family != "scm" && family != "styled")
    throw config_error("data.family: must be 'scm' or 'styled'");

  json cfg = detail::deep_merge(experiment_defaults(family), user);
  detail::require_keys(cfg, "config", {"data", "model", "train", "eval", "out_dir", "seeds"});

  ExperimentConfig out;
  out.family = family;
  const json& data = cfg["data"];
  if (family == "scm") {
    detail::require_keys(data, "data",
                         {"family", "d_c", "d_e", "mu_c", "sigma_c", "envs", "eta",
                          "mixing_seed", "n_per_env_train", "n_test"});
    out.scm.d_c = data.at("d_c").get<std::size_t>();
    out.scm.d_e = data.at("d_e").get<std::size_t>();
    auto mu_c = data.at("mu_c").get<std::vector<double>>();
    out.scm.mu_c = mu_c.empty() ? detail::const_vec(out.scm.d_c, 0.6) : mu_c;
    out.scm.sigma_c = data.at("sigma_c").get<double>();
    out.scm.eta = data.at("eta").get<double>();
    std::size_t e_idx = 0;
    for (const json& e : data.at("envs")) {
      detail::require_keys(e, "data.envs[" + std::to_string(e_idx) + "]",
                           {"mu_e", "sigma_e"});
      EnvSpec spec;
      spec.mu_e = e.at("mu_e").get<std::vector<double>>();
      if (spec.mu_e.empty()) {
        // default spurious means share one direction across environments
        // (informativeness varies through sigma_e); the OOD test env flips it
        spec.mu_e = detail::const_vec(out.scm.d_e, 1.0 - 0.05 * double(e_idx));
      }
      spec.sigma_e = e.at("sigma_e").get<double>();
      out.scm.envs.push_back(std::move(spec));
      ++e_idx;
    }
    out.scm.mixing = random_orthogonal_mixing(out.scm.d_c + out.scm.d_e,
                                              data.at("mixing_seed").get<std::uint64_t>());
    out.scm.validate();
    out.arch.input_shape = {out.scm.dim()};
    out.arch.classes = 2;
    // materialize the defaulted vectors so the resolved config is explicit
    cfg["data"]["mu_c"] = out.scm.mu_c;
    for (std::size_t e = 0; e < out.scm.envs.size(); ++e)
      cfg["data"]["envs"][e]["mu_e"] = out.scm.envs[e].mu_e;
  } else {
    detail::require_keys(data, "data",
                         {"family", "side", "classes", "styles", "n_motifs", "rho",
                          "sigma_pix", "n_per_env_train", "n_test"});
    out.styled.side = data.at("side").get<std::size_t>();
    out.styled.classes = data.at("classes").get<std::size_t>();
    out.styled.n_motifs = data.at("n_motifs").get<std::size_t>();
    out.styled.rho = data.at("rho").get<std::vector<double>>();
    out.styled.sigma_pix = data.at("sigma_pix").get<double>();
    std::size_t s_idx = 0;
    for (const json& s : data.at("styles")) {
      detail::require_keys(s, "data.styles[" + std::to_string(s_idx) + "]",
                           {"gain", "bias", "tex_amp", "tex_freq"});
      out.styled.styles.push_back({s.at("gain").get<double>(), s.at("bias").get<double>(),
                                   s.at("tex_amp").get<double>(),
                                   s.at("tex_freq").get<double>()});
      ++s_idx;
    }
    out.styled.validate();
    out.arch.input_shape = {1, out.styled.side, out.styled.side};
    out.arch.classes = out.styled.classes;
  }
  out.n_per_env_train = data.at("n_per_env_train").get<std::size_t>();
  out.n_test = data.at("n_test").get<std::size_t>();
  if (out.n_per_env_train < 1 || out.n_test < 1)
    throw config_error("data.n_per_env_train/n_test: must be >= 1");

  const json& model = cfg["model"];
  detail::require_keys(model, "model", {"extractor", "sdf_taps"});
  out.arch.extractor = detail::parse_extractor(model.at("extractor"), "model.extractor");
  out.arch.sdf_taps = model.at("sdf_taps").get<std::vector<std::size_t>>();
  feature_dim(out.arch);  // validates layer compatibility

  const json& train = cfg["train"];
  detail::require_keys(train, "train",
                       {"lambda_adv", "lambda_ent", "lambda_irm", "penalty",
                        "entropy_sign", "S", "k_env", "bigsteps", "steps", "batch_size",
                        "optimizer", "birm", "env_source", "env_cluster_full_set",
                        "disc_steps", "disc_lr", "log_every"});
  out.train.weights.lambda_adv = train.at("lambda_adv").get<double>();
  out.train.weights.lambda_ent = train.at("lambda_ent").get<double>();
  out.train.weights.lambda_irm = train.at("lambda_irm").get<double>();
  std::string penalty = train.at("penalty").get<std::string>();
  if (penalty == "irmv1")
    out.train.weights.penalty = PenaltyKind::irmv1;
  else if (penalty == "birm")
    out.train.weights.penalty = PenaltyKind::birm;
  else
    throw config_error("train.penalty: must be 'irmv1' or 'birm'");
  std::string esign = train.at("entropy_sign").get<std::string>();
  if (esign == "minimize_entropy")
    out.train.entropy_sign = EntropySign::minimize_entropy;
  else if (esign == "paper")
    out.train.entropy_sign = EntropySign::paper;
  else
    throw config_error("train.entropy_sign: must be 'minimize_entropy' or 'paper'");
  out.train.S = train.at("S").get<std::size_t>();
  out.train.k_env = train.at("k_env").get<std::size_t>();
  out.train.bigsteps = train.at("bigsteps").get<std::size_t>();
  out.train.steps = train.at("steps").get<std::size_t>();
  out.train.batch_size = train.at("batch_size").get<std::size_t>();
  const json& opt = train.at("optimizer");
  detail::require_keys(opt, "train.optimizer", {"kind", "lr", "momentum"});
  std::string kind = opt.at("kind").get<std::string>();
  if (kind == "adam")
    out.train.opt_kind = OptKind::adam;
  else if (kind == "sgd_momentum")
    out.train.opt_kind = OptKind::sgd_momentum;
  else
    throw config_error("train.optimizer.kind: must be 'adam' or 'sgd_momentum'");
  out.train.opt_hyper.lr = opt.at("lr").get<double>();
  out.train.opt_hyper.momentum = opt.at("momentum").get<double>();
  const json& birm = train.at("birm");
  detail::require_keys(birm, "train.birm", {"steps", "lr"});
  out.train.birm.steps = birm.at("steps").get<int>();
  out.train.birm.lr = birm.at("lr").get<double>();
  std::string env_source = train.at("env_source").get<std::string>();
  if (env_source == "cluster")
    out.train.env_source = EnvSource::cluster;
  else if (env_source == "truth")
    out.train.env_source = EnvSource::truth;
  else
    throw config_error("train.env_source: must be 'cluster' or 'truth'");
  out.train.env_cluster_full_set = train.at("env_cluster_full_set").get<bool>();
  out.train.disc_steps = train.at("disc_steps").get<std::size_t>();
  out.train.disc_lr = train.at("disc_lr").get<double>();
  out.train.log_every = train.at("log_every").get<std::size_t>();
  out.train.validate();
  out.arch.styles = out.train.S;
  if (out.train.S > 1 && out.arch.sdf_taps.empty())
    throw config_error("model.sdf_taps: required when train.S > 1");

  const json& eval = cfg["eval"];
  if (family == "scm") {
    detail::require_keys(eval, "eval", {"alphas", "sigma_test"});
    out.alphas = eval.at("alphas").get<std::vector<double>>();
    if (out.alphas.size() != out.scm.envs.size())
      throw config_error("eval.alphas: length must equal data.envs length");
    out.sigma_test = eval.at("sigma_test").get<double>();
    if (out.sigma_test <= 0.0) throw config_error("eval.sigma_test: must be positive");
  } else {
    detail::require_keys(eval, "eval", {"rho_test"});
    out.rho_test = eval.at("rho_test").get<double>();
    if (!(out.rho_test >= 0.0 && out.rho_test <= 1.0))
      throw config_error("eval.rho_test: must lie in [0,1]");
  }

  out.out_dir = cfg.at("out_dir").get<std::string>();
  out.seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
  if (out.seeds.empty()) throw config_error("seeds: need at least one seed");

  out.resolved = cfg;
  return out;
}

// Applies `dotted.path=value` onto raw JSON; the value is parsed as JSON
// with a fallback to a plain string.
inline void apply_override(json& cfg, const std::string& setting) {
  auto eq = setting.find('=');
  if (eq == std::string::npos)
    throw config_error("--set expects dotted.path=value, got '" + setting + "'");
  std::string path = setting.substr(0, eq);
  std::string value_str = setting.substr(eq + 1);
  json value;
  try {
    value = json::parse(value_str);
  } catch (const json::parse_error&) {
    value = value_str;
  }
  json* cur = &cfg;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw config_error("--set: empty key in path '" + path + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

}  // namespace irss

#endif  // IRSS_CONFIG_HPP_
