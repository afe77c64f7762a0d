#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <map>
#include <random>

#include "irss/dataset.hpp"
#include "irss/scm.hpp"
#include "irss/styled.hpp"
#include "test_support.hpp"

using namespace irss;

namespace {

SCMConfig small_scm(std::uint64_t mix_seed_val = 5) {
  SCMConfig cfg;
  cfg.d_c = 3;
  cfg.d_e = 2;
  cfg.mu_c = {0.5, -0.3, 0.2};
  cfg.sigma_c = 1.0;
  cfg.envs = {{{1.0, -1.0}, 0.5}, {{0.8, 1.2}, 0.8}};
  cfg.eta = 0.5;
  cfg.mixing = random_orthogonal_mixing(5, mix_seed_val);
  cfg.validate();
  return cfg;
}

// Recover which corner motif an image carries by its corner block mean.
int detect_motif(const Sample& s, std::size_t side) {
  auto block = [&](std::size_t r0, std::size_t c0) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) sum += s.x[(r0 + i) * side + (c0 + j)];
    return sum;
  };
  double tl = block(0, 0), br = block(side - 3, side - 3);
  return tl >= br ? 0 : 1;
}

}  // namespace

TEST_CASE("eta one makes every label positive") {
  SCMConfig cfg = small_scm();
  cfg.eta = 1.0;
  Dataset ds = sample_scm(cfg, 0, 200, 3);
  for (const Sample& s : ds.samples) REQUIRE(s.y == 1);
}

TEST_CASE("degenerate sigmas collapse onto the mixed means") {
  SCMConfig cfg = small_scm();
  cfg.sigma_c = 1e-12;
  cfg.envs[0].sigma_e = 1e-12;
  Dataset ds = sample_scm(cfg, 0, 50, 9);
  std::size_t D = cfg.dim();
  for (const Sample& s : ds.samples) {
    double u = s.y == 1 ? 1.0 : -1.0;
    std::vector<double> z(D);
    for (std::size_t j = 0; j < cfg.d_c; ++j) z[j] = u * cfg.mu_c[j];
    for (std::size_t j = 0; j < cfg.d_e; ++j) z[cfg.d_c + j] = u * cfg.envs[0].mu_e[j];
    std::vector<double> expect = apply_mixing(cfg.mixing, D, z);
    for (std::size_t j = 0; j < D; ++j) REQUIRE(std::abs(s.x[j] - expect[j]) < 1e-6);
  }
}

TEST_CASE("balanced eta keeps the causal block centered") {
  SCMConfig cfg = small_scm();
  std::size_t n = 100000;
  Dataset ds = sample_scm(cfg, 0, n, 17);
  std::size_t D = cfg.dim();
  std::vector<double> mean(cfg.d_c, 0.0);
  std::vector<double> z(D);
  for (const Sample& s : ds.samples) {
    // invert the mixing to recover z_c
    for (std::size_t i = 0; i < D; ++i) {
      z[i] = 0.0;
      for (std::size_t j = 0; j < D; ++j) z[i] += cfg.mixing_inv[i * D + j] * s.x[j];
    }
    for (std::size_t j = 0; j < cfg.d_c; ++j) mean[j] += z[j];
  }
  double bound = 3.0 * cfg.sigma_c / std::sqrt(double(n)) * std::sqrt(double(cfg.d_c));
  for (std::size_t j = 0; j < cfg.d_c; ++j)
    REQUIRE(std::abs(mean[j] / double(n)) < bound);
}

TEST_CASE("label frequencies are balanced at eta one half") {
  SCMConfig cfg = small_scm();
  std::size_t n = 20000;
  Dataset ds = sample_scm(cfg, 1, n, 23);
  double ones = 0.0;
  for (const Sample& s : ds.samples) ones += s.y;
  REQUIRE(std::abs(ones / double(n) - 0.5) < 3.0 / std::sqrt(double(n)) * 0.5);
}

TEST_CASE("mixing map round-trips") {
  SCMConfig cfg = small_scm();
  std::mt19937_64 rng(2);
  std::size_t D = cfg.dim();
  for (int t = 0; t < 20; ++t) {
    std::vector<double> z = irss::test::random_vec(D, rng, -2.0, 2.0);
    std::vector<double> x = apply_mixing(cfg.mixing, D, z);
    std::vector<double> back = apply_mixing(cfg.mixing_inv, D, x);
    for (std::size_t j = 0; j < D; ++j) REQUIRE(std::abs(back[j] - z[j]) < 1e-8);
  }
}

TEST_CASE("non-invertible mixing is rejected") {
  SCMConfig cfg = small_scm();
  std::fill(cfg.mixing.begin(), cfg.mixing.end(), 1.0);
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("scm sampling is reproducible and env index checked") {
  SCMConfig cfg = small_scm();
  Dataset a = sample_scm(cfg, 0, 100, 77);
  Dataset b = sample_scm(cfg, 0, 100, 77);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.samples[i].y == b.samples[i].y);
    REQUIRE(a.samples[i].x == b.samples[i].x);
  }
  REQUIRE_THROWS_AS(sample_scm(cfg, 5, 10, 0), std::out_of_range);
}

TEST_CASE("ood test env negates the alpha-weighted mean") {
  SCMConfig cfg = small_scm();

  SECTION("single env, alpha one") {
    SCMConfig one = cfg;
    one.envs.resize(1);
    std::vector<double> alpha = {1.0};
    TestEnvReport rep = make_ood_test_env(one, alpha, 0.5);
    for (std::size_t j = 0; j < one.d_e; ++j)
      REQUIRE(rep.env.mu_e[j] == Catch::Approx(-one.envs[0].mu_e[j]));
    REQUIRE_FALSE(rep.degenerate);
  }

  SECTION("two opposed envs cancel") {
    SCMConfig two = cfg;
    two.envs[1].mu_e = {-two.envs[0].mu_e[0], -two.envs[0].mu_e[1]};
    std::vector<double> alpha = {0.5, 0.5};
    TestEnvReport rep = make_ood_test_env(two, alpha, 0.5);
    for (double m : rep.env.mu_e) REQUIRE(m == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("margins match the two-point brute force") {
    std::vector<double> alpha = {0.7, 0.2};
    TestEnvReport rep = make_ood_test_env(cfg, alpha, 0.4);
    for (std::size_t e = 0; e < cfg.envs.size(); ++e) {
      double brute = std::numeric_limits<double>::infinity();
      for (double u : {-1.0, 1.0}) {
        double s = 0.0;
        for (std::size_t j = 0; j < cfg.d_e; ++j) {
          double d = rep.env.mu_e[j] - u * cfg.envs[e].mu_e[j];
          s += d * d;
        }
        brute = std::min(brute, std::sqrt(s));
      }
      REQUIRE(rep.margins[e] == Catch::Approx(brute));
    }
  }

  SECTION("all-zero alphas flag a degenerate test env") {
    std::vector<double> alpha = {0.0, 0.0};
    TestEnvReport rep = make_ood_test_env(cfg, alpha, 0.4);
    REQUIRE(rep.degenerate);
  }
}

TEST_CASE("noise-free deterministic renderer") {
  StyleImageConfig cfg = StyleImageConfig::defaults();
  cfg.sigma_pix = 0.0;
  cfg.rho = {1.0, 0.5};
  Dataset ds = sample_styled_images(cfg, 0, 400, 11);
  std::map<std::pair<int, int>, std::vector<double>> first;
  for (const Sample& s : ds.samples) {
    auto key = std::make_pair(s.y, s.true_style);
    auto it = first.find(key);
    if (it == first.end())
      first[key] = s.x;
    else
      REQUIRE(s.x == it->second);
  }
}

TEST_CASE("rho one makes the patch a perfect predictor") {
  StyleImageConfig cfg = StyleImageConfig::defaults();
  cfg.sigma_pix = 0.0;
  cfg.rho = {1.0, 0.5};
  Dataset ds = sample_styled_images(cfg, 0, 500, 13);
  for (const Sample& s : ds.samples)
    REQUIRE(detect_motif(s, cfg.side) == s.y % 2);
}

TEST_CASE("rho half leaves patch and label nearly independent") {
  StyleImageConfig cfg = StyleImageConfig::defaults();
  cfg.sigma_pix = 0.0;
  cfg.rho = {0.5, 0.9};
  std::size_t n = 10000;
  Dataset ds = sample_styled_images(cfg, 0, n, 19);
  // plug-in mutual information between detected motif and label
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pm, py;
  for (const Sample& s : ds.samples) {
    int m = detect_motif(s, cfg.side);
    joint[{m, s.y}] += 1.0;
    pm[m] += 1.0;
    py[s.y] += 1.0;
  }
  double mi = 0.0;
  for (auto& [k, c] : joint) {
    double pxy = c / double(n);
    double px = pm[k.first] / double(n);
    double pyv = py[k.second] / double(n);
    mi += pxy * std::log(pxy / (px * pyv));
  }
  REQUIRE(mi < 0.02);
}

TEST_CASE("styled sampling is reproducible") {
  StyleImageConfig cfg = StyleImageConfig::defaults();
  Dataset a = sample_styled_images(cfg, 1, 50, 7);
  Dataset b = sample_styled_images(cfg, 1, 50, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.samples[i].x == b.samples[i].x);
    REQUIRE(a.samples[i].true_style == b.samples[i].true_style);
  }
}

TEST_CASE("identical rho across training envs is rejected") {
  StyleImageConfig cfg = StyleImageConfig::defaults();
  cfg.rho = {0.8, 0.8};
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("dataset dump and load round-trip") {
  SCMConfig cfg = small_scm();
  Dataset ds = sample_scm(cfg, 0, 64, 31);
  ds.samples[3].true_style = 1;
  std::string path = "roundtrip_test.irssds";
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  std::remove(path.c_str());
  REQUIRE(back.x_shape == ds.x_shape);
  REQUIRE(back.classes == ds.classes);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(back.samples[i].x == ds.samples[i].x);
    REQUIRE(back.samples[i].y == ds.samples[i].y);
    REQUIRE(back.samples[i].true_style == ds.samples[i].true_style);
    REQUIRE(back.samples[i].true_env == ds.samples[i].true_env);
  }
}

TEST_CASE("loading a non-dataset file fails cleanly") {
  std::string path = "bad_magic.irssds";
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a dataset";
  }
  REQUIRE_THROWS_AS(load_dataset(path), config_error);
  std::remove(path.c_str());
}
