#ifndef IRSS_BOUND_HPP_
#define IRSS_BOUND_HPP_

// Lower bound on the 0-1 risk of IRM under a training/test mean shift in the
// Gaussian SCM, and an empirical confrontation that trains a linear IRM
// model on the training environments and measures its test risk next to the
// bound.
//
// Notation notes: the source statement's |mu_e|2^2 and sigma{k+1} are read
// as the squared L2 norm and sigma_{k+1}. beta_0, gamma, sigma_ERM and
// epsilon appear in the conditions without a definition; they are accepted
// as opaque inputs and echoed in the report.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "irss/common.hpp"
#include "irss/scm.hpp"
#include "irss/trainer.hpp"

namespace irss {

inline double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// F(2c) - (2k / (sqrt(R*pi) * delta)) * exp(-R * delta^2).
inline double bound_value(double c, std::size_t k, double delta, double R) {
  if (k < 1) throw std::domain_error("bound_value: k must be >= 1");
  if (delta <= 0.0) throw std::domain_error("bound_value: delta must be positive");
  if (R <= 0.0) throw std::domain_error("bound_value: R must be positive");
  double correction =
      (2.0 * double(k) / (std::sqrt(R * std::numbers::pi) * delta)) * std::exp(-R * delta * delta);
  return gaussian_cdf(2.0 * c) - correction;
}

struct BoundParams {
  double c = 0.0;
  double delta = 1.0;
  double epsilon = 0.0;  // undefined in the source; exposed with default 0
  double beta0 = 0.0;    // opaque condition inputs
  double gamma = 0.0;
  double sigma_erm = 1.0;
  std::vector<double> alphas;
  double sigma_test = 1.0;

  void validate(const SCMConfig& scm) const {
    if (delta <= 0.0) throw std::domain_error("bound: delta must be positive");
    if (sigma_test <= 0.0) throw std::domain_error("bound: sigma_test must be positive");
    if (epsilon < 0.0) throw std::domain_error("bound: epsilon must be >= 0");
    if (alphas.size() != scm.envs.size())
      throw config_error("bound: alphas length must equal environment count");
  }
};

struct ConditionReport {
  std::size_t k = 0;
  double R = 0.0;  // min_e sigma_e^2 / sigma_test^2
  std::vector<double> separation_lhs;  // min_U ||mu_test - U mu_e|| per env
  std::vector<double> separation_rhs;  // (sqrt(eps)+delta) sigma_e sqrt(d_e)
  std::vector<bool> separation_ok;
  double alpha_residual = 0.0;  // ||mu_test + sum alpha_e mu_e||
  bool alpha_ok = false;
  double c_condition_lhs = 0.0;  // sum alpha_e ||mu_e||^2 / sigma_e^2
  double c_condition_rhs = 0.0;
  bool c_condition_ok = false;
  bool gamma_valid = true;  // rhs requires gamma < 1
  bool all_ok = false;
};

inline ConditionReport check_conditions(const BoundParams& p, const SCMConfig& scm,
                                        const EnvSpec& test_env) {
  p.validate(scm);
  ConditionReport rep;
  rep.k = scm.envs.size();

  double min_ratio = std::numeric_limits<double>::infinity();
  for (const EnvSpec& e : scm.envs)
    min_ratio = std::min(min_ratio, e.sigma_e * e.sigma_e /
                                        (test_env.sigma_e * test_env.sigma_e));
  rep.R = min_ratio;

  bool sep_all = true;
  for (const EnvSpec& e : scm.envs) {
    double lhs = std::numeric_limits<double>::infinity();
    for (double u : {-1.0, 1.0}) {
      double s = 0.0;
      for (std::size_t j = 0; j < scm.d_e; ++j) {
        double d = test_env.mu_e[j] - u * e.mu_e[j];
        s += d * d;
      }
      lhs = std::min(lhs, std::sqrt(s));
    }
    double rhs = (std::sqrt(p.epsilon) + p.delta) * e.sigma_e * std::sqrt(double(scm.d_e));
    rep.separation_lhs.push_back(lhs);
    rep.separation_rhs.push_back(rhs);
    rep.separation_ok.push_back(lhs >= rhs);
    sep_all = sep_all && lhs >= rhs;
  }

  double resid = 0.0;
  for (std::size_t j = 0; j < scm.d_e; ++j) {
    double v = test_env.mu_e[j];
    for (std::size_t e = 0; e < scm.envs.size(); ++e)
      v += p.alphas[e] * scm.envs[e].mu_e[j];
    resid += v * v;
  }
  rep.alpha_residual = std::sqrt(resid);
  rep.alpha_ok = rep.alpha_residual <= 1e-9;

  double lhs = 0.0;
  for (std::size_t e = 0; e < scm.envs.size(); ++e) {
    double norm2 = 0.0;
    for (double m : scm.envs[e].mu_e) norm2 += m * m;
    lhs += p.alphas[e] * norm2 / (scm.envs[e].sigma_e * scm.envs[e].sigma_e);
  }
  rep.c_condition_lhs = lhs;
  rep.gamma_valid = p.gamma < 1.0;
  if (rep.gamma_valid) {
    double muc2 = 0.0;
    for (double m : scm.mu_c) muc2 += m * m;
    rep.c_condition_rhs = (muc2 / (scm.sigma_c * scm.sigma_c) + std::abs(p.beta0) / 2.0 +
                           p.c * p.sigma_erm) /
                          (1.0 - p.gamma);
    rep.c_condition_ok = lhs >= rep.c_condition_rhs;
  }
  rep.all_ok = sep_all && rep.alpha_ok && rep.gamma_valid && rep.c_condition_ok;
  return rep;
}

inline void to_json(nlohmann::json& j, const ConditionReport& r) {
  j = nlohmann::json{{"k", r.k},
                     {"R", r.R},
                     {"separation_lhs", r.separation_lhs},
                     {"separation_rhs", r.separation_rhs},
                     {"separation_ok", r.separation_ok},
                     {"alpha_residual", r.alpha_residual},
                     {"alpha_ok", r.alpha_ok},
                     {"c_condition_lhs", r.c_condition_lhs},
                     {"c_condition_rhs", r.c_condition_rhs},
                     {"c_condition_ok", r.c_condition_ok},
                     {"gamma_valid", r.gamma_valid},
                     {"all_ok", r.all_ok},
                     {"note", "beta0, gamma, sigma_erm, epsilon are caller-supplied"}};
}

struct ConfrontationConfig {
  TrainConfig train;  // weights select the IRM variant; env_source forced to truth
  std::size_t n_per_env = 1000;
  std::size_t n_test = 4000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct ConfrontationReport {
  ConditionReport conditions;
  double bound = 0.0;
  std::vector<double> risks;  // per seed 0-1 test risk
  double risk_mean = 0.0;
  double risk_sd = 0.0;
  bool conditions_ok = false;
};

// Trains the linear IRMv1 baseline on the k training environments (true
// environment labels, matching the setting of the bound) and measures 0-1
// risk on the test environment across seeds.
inline ConfrontationReport empirical_confrontation(const SCMConfig& scm,
                                                   const EnvSpec& test_env,
                                                   const BoundParams& p,
                                                   const ConfrontationConfig& cc) {
  ConfrontationReport rep;
  rep.conditions = check_conditions(p, scm, test_env);
  rep.conditions_ok = rep.conditions.all_ok;
  rep.bound = bound_value(p.c, rep.conditions.k, p.delta, rep.conditions.R);

  Architecture arch;
  arch.input_shape = {scm.dim()};
  arch.classes = 2;
  arch.styles = 1;

  for (std::uint64_t seed : cc.seeds) {
    Dataset train_set;
    for (std::size_t e = 0; e < scm.envs.size(); ++e)
      train_set.append(sample_scm(scm, e, cc.n_per_env, mix_seed(seed, 10 + e)));
    Dataset test_set =
        sample_scm_env(scm, test_env, int(scm.envs.size()), cc.n_test, mix_seed(seed, 99));

    TrainConfig tc = cc.train;
    tc.seed = seed;
    tc.env_source = EnvSource::truth;
    tc.S = 1;
    RunState rs = run_baseline(BaselineKind::irm_v1, train_set, arch, tc, &test_set);
    EvalReport ev = evaluate(rs.params, arch, test_set);
    rep.risks.push_back(1.0 - ev.acc);
  }
  auto [mean, sd] = mean_sd(rep.risks);
  rep.risk_mean = mean;
  rep.risk_sd = sd;
  return rep;
}

inline void to_json(nlohmann::json& j, const ConfrontationReport& r) {
  j = nlohmann::json{{"conditions", r.conditions}, {"bound", r.bound},
                     {"risks", r.risks},           {"risk_mean", r.risk_mean},
                     {"risk_sd", r.risk_sd},       {"conditions_ok", r.conditions_ok}};
}

}  // namespace irss

#endif  // IRSS_BOUND_HPP_
