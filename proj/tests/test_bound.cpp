#include <catch2/catch_amalgamated.hpp>

#include "irss/bound.hpp"
#include "test_support.hpp"

using namespace irss;

namespace {

SCMConfig bound_scm() {
  SCMConfig cfg;
  cfg.d_c = 3;
  cfg.d_e = 3;
  cfg.mu_c = {0.4, -0.3, 0.3};
  cfg.sigma_c = 1.0;
  cfg.envs = {{{1.0, 1.0, -1.0}, 0.3}, {{0.9, -1.0, 0.8}, 0.5}};
  cfg.eta = 0.5;
  cfg.mixing = random_orthogonal_mixing(6, 7);
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("bound approaches half as the correction vanishes") {
  REQUIRE(bound_value(0.0, 1, 1e9, 1.0) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("bound matches the frozen high-precision value") {
  REQUIRE(bound_value(0.0, 1, 2.0, 1.0) ==
          Catch::Approx(0.4896665073229540).margin(1e-12));
}

TEST_CASE("bound is monotone increasing in delta") {
  double prev = -1e9;
  for (double delta : {0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    double b = bound_value(0.3, 3, delta, 0.8);
    REQUIRE(b > prev);
    prev = b;
  }
}

TEST_CASE("bound never exceeds the gaussian cdf term or one") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int t = 0; t < 50; ++t) {
    double c = u(rng) - 1.5, delta = u(rng), R = u(rng);
    std::size_t k = 1 + std::size_t(t % 4);
    double b = bound_value(c, k, delta, R);
    REQUIRE(b <= gaussian_cdf(2.0 * c));
    REQUIRE(b <= 1.0);
  }
}

TEST_CASE("gaussian cdf is symmetric") {
  for (double x : {0.0, 0.3, 1.0, 2.5, 7.0})
    REQUIRE(gaussian_cdf(x) + gaussian_cdf(-x) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("bound rejects nonpositive delta or R") {
  REQUIRE_THROWS_AS(bound_value(0.0, 1, 0.0, 1.0), std::domain_error);
  REQUIRE_THROWS_AS(bound_value(0.0, 1, 1.0, -0.5), std::domain_error);
  REQUIRE_THROWS_AS(bound_value(0.0, 0, 1.0, 1.0), std::domain_error);
}

TEST_CASE("separation margins scale with the means") {
  SCMConfig cfg = bound_scm();
  BoundParams p;
  p.alphas = {1.0, 0.0};
  p.delta = 1.0;
  p.sigma_test = 0.4;
  TestEnvReport test_env = make_ood_test_env(cfg, p.alphas, p.sigma_test);
  ConditionReport r1 = check_conditions(p, cfg, test_env.env);

  SCMConfig scaled = cfg;
  for (auto& e : scaled.envs)
    for (double& m : e.mu_e) m *= 10.0;
  TestEnvReport test10 = make_ood_test_env(scaled, p.alphas, p.sigma_test);
  ConditionReport r10 = check_conditions(p, scaled, test10.env);
  for (std::size_t e = 0; e < cfg.envs.size(); ++e)
    REQUIRE(r10.separation_lhs[e] == Catch::Approx(10.0 * r1.separation_lhs[e]));
}

TEST_CASE("zero alphas fail the c-condition") {
  SCMConfig cfg = bound_scm();
  BoundParams p;
  p.alphas = {0.0, 0.0};
  p.c = 0.0;
  p.sigma_test = 0.4;
  EnvSpec test_env;
  test_env.mu_e = {0.1, 0.1, 0.1};
  test_env.sigma_e = 0.4;
  ConditionReport rep = check_conditions(p, cfg, test_env);
  REQUIRE(rep.c_condition_lhs == 0.0);
  REQUIRE_FALSE(rep.c_condition_ok);
}

TEST_CASE("condition margins agree with the two-point brute force") {
  SCMConfig cfg = bound_scm();
  BoundParams p;
  p.alphas = {0.8, 0.3};
  p.delta = 0.7;
  p.sigma_test = 0.5;
  TestEnvReport test_env = make_ood_test_env(cfg, p.alphas, p.sigma_test);
  ConditionReport rep = check_conditions(p, cfg, test_env.env);
  for (std::size_t e = 0; e < cfg.envs.size(); ++e) {
    double brute = std::numeric_limits<double>::infinity();
    for (double u : {-1.0, 1.0}) {
      double s = 0.0;
      for (std::size_t j = 0; j < cfg.d_e; ++j) {
        double d = test_env.env.mu_e[j] - u * cfg.envs[e].mu_e[j];
        s += d * d;
      }
      brute = std::min(brute, std::sqrt(s));
    }
    REQUIRE(rep.separation_lhs[e] == Catch::Approx(brute));
    REQUIRE(rep.separation_lhs[e] == Catch::Approx(test_env.margins[e]));
  }
}

TEST_CASE("in-distribution test env yields low risk and flagged conditions") {
  SCMConfig cfg = bound_scm();
  BoundParams p;
  p.alphas = {0.0, 0.0};  // cannot represent a training env with alphas >= 0
  p.c = 0.0;
  p.delta = 1.0;
  p.sigma_test = cfg.envs[0].sigma_e;

  ConfrontationConfig cc;
  cc.n_per_env = 400;
  cc.n_test = 1000;
  cc.seeds = {1, 2};
  cc.train.weights = LossWeights{0.0, 0.0, 1.0, PenaltyKind::irmv1};
  cc.train.k_env = 2;
  cc.train.bigsteps = 1;
  cc.train.steps = 120;
  cc.train.batch_size = 128;
  cc.train.opt_hyper = OptHyper{.lr = 5e-3};

  ConfrontationReport rep = empirical_confrontation(cfg, cfg.envs[0], p, cc);
  REQUIRE_FALSE(rep.conditions_ok);  // separation and alpha conditions violated
  REQUIRE(rep.risk_mean < 0.4);      // in-distribution sanity
  REQUIRE(rep.bound == bound_value(p.c, rep.conditions.k, p.delta, rep.conditions.R));
}
