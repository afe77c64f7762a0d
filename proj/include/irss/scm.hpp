#ifndef IRSS_SCM_HPP_
#define IRSS_SCM_HPP_

// Gaussian structural causal model: a latent sign U flips the means of the
// causal block z_c and the per-environment spurious block z_e; an invertible
// linear map mixes [z_c; z_e] into the observed vector. The label is the
// indicator of U = +1.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "irss/common.hpp"
#include "irss/dataset.hpp"

namespace irss {

struct EnvSpec {
  std::vector<double> mu_e;
  double sigma_e = 1.0;
};

struct SCMConfig {
  std::size_t d_c = 0;
  std::size_t d_e = 0;
  std::vector<double> mu_c;
  double sigma_c = 1.0;
  std::vector<EnvSpec> envs;
  double eta = 0.5;                // P(U = +1)
  std::vector<double> mixing;      // D x D row-major, D = d_c + d_e
  std::vector<double> mixing_inv;  // cached at validation

  std::size_t dim() const { return d_c + d_e; }

  void validate() {
    std::size_t D = dim();
    if (d_c == 0 || d_e == 0) throw config_error("scm: d_c and d_e must be positive");
    if (mu_c.size() != d_c) throw config_error("scm: mu_c has wrong length");
    if (sigma_c <= 0.0) throw config_error("scm: sigma_c must be positive");
    if (envs.empty()) throw config_error("scm: need at least one training environment");
    for (const EnvSpec& e : envs) {
      if (e.mu_e.size() != d_e) throw config_error("scm: mu_e has wrong length");
      if (e.sigma_e <= 0.0) throw config_error("scm: sigma_e must be positive");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) throw config_error("scm: eta must lie in [0,1]");
    if (mixing.size() != D * D) throw config_error("scm: mixing must be DxD");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        W(mixing.data(), Eigen::Index(D), Eigen::Index(D));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(W);
    if (std::abs(lu.determinant()) <= 1e-8)
      throw config_error("scm: mixing map is not invertible");
    Eigen::MatrixXd inv = lu.inverse();
    mixing_inv.resize(D * D);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j)
        mixing_inv[i * D + j] = inv(Eigen::Index(i), Eigen::Index(j));
  }
};

// QR of a seeded Gaussian matrix, signs fixed so the factorization is unique.
inline std::vector<double> random_orthogonal_mixing(std::size_t D, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Index n = Eigen::Index(D);
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < Q.cols(); ++j)
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  std::vector<double> out(D * D);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < D; ++j) out[i * D + j] = Q(Eigen::Index(i), Eigen::Index(j));
  return out;
}

inline std::vector<double> apply_mixing(std::span<const double> W, std::size_t D,
                                        std::span<const double> z) {
  std::vector<double> x(D, 0.0);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < D; ++j) x[i] += W[i * D + j] * z[j];
  return x;
}

// Draws n samples from one environment. Works for any EnvSpec, including a
// test environment appended by the caller.
inline Dataset sample_scm_env(const SCMConfig& cfg, const EnvSpec& env, int env_index,
                              std::size_t n, std::uint64_t seed) {
  if (n < 1) throw config_error("sample_scm: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t D = cfg.dim();

  Dataset ds;
  ds.x_shape = {D};
  ds.classes = 2;
  ds.samples.resize(n);
  std::vector<double> z(D);
  for (std::size_t i = 0; i < n; ++i) {
    double u_sign = unif(rng) < cfg.eta ? 1.0 : -1.0;
    for (std::size_t j = 0; j < cfg.d_c; ++j)
      z[j] = u_sign * cfg.mu_c[j] + cfg.sigma_c * gauss(rng);
    for (std::size_t j = 0; j < cfg.d_e; ++j)
      z[cfg.d_c + j] = u_sign * env.mu_e[j] + env.sigma_e * gauss(rng);
    Sample& s = ds.samples[i];
    s.x = apply_mixing(cfg.mixing, D, z);
    s.y = u_sign > 0.0 ? 1 : 0;
    s.true_env = env_index;
    s.true_style = 0;
  }
  return ds;
}

inline Dataset sample_scm(const SCMConfig& cfg, std::size_t env_index, std::size_t n,
                          std::uint64_t seed) {
  if (env_index >= cfg.envs.size())
    throw std::out_of_range("sample_scm: environment index out of range");
  return sample_scm_env(cfg, cfg.envs[env_index], int(env_index), n, seed);
}

struct TestEnvReport {
  EnvSpec env;                       // mu_{k+1} = -sum_e alpha_e mu_e, sigma_test
  std::vector<double> margins;       // per training env: min_U ||mu_test - U mu_e||
  std::vector<double> margin_scale;  // per training env: sigma_e * sqrt(d_e)
  bool degenerate = false;           // all-zero alphas against nonzero means
};

inline TestEnvReport make_ood_test_env(const SCMConfig& cfg, std::span<const double> alphas,
                                       double sigma_test) {
  if (alphas.size() != cfg.envs.size())
    throw config_error("make_ood_test_env: alphas length must equal environment count");
  for (double a : alphas)
    if (a < 0.0) throw config_error("make_ood_test_env: alphas must be >= 0");
  if (sigma_test <= 0.0) throw config_error("make_ood_test_env: sigma_test must be positive");

  TestEnvReport rep;
  rep.env.sigma_e = sigma_test;
  rep.env.mu_e.assign(cfg.d_e, 0.0);
  for (std::size_t e = 0; e < cfg.envs.size(); ++e)
    for (std::size_t j = 0; j < cfg.d_e; ++j)
      rep.env.mu_e[j] -= alphas[e] * cfg.envs[e].mu_e[j];

  bool all_zero_alpha = true;
  for (double a : alphas) all_zero_alpha = all_zero_alpha && a == 0.0;
  bool any_mu = false;
  for (const EnvSpec& e : cfg.envs)
    for (double m : e.mu_e) any_mu = any_mu || m != 0.0;
  rep.degenerate = all_zero_alpha && any_mu;

  for (const EnvSpec& e : cfg.envs) {
    double best = std::numeric_limits<double>::infinity();
    for (double u : {-1.0, 1.0}) {
      double s = 0.0;
      for (std::size_t j = 0; j < cfg.d_e; ++j) {
        double d = rep.env.mu_e[j] - u * e.mu_e[j];
        s += d * d;
      }
      best = std::min(best, std::sqrt(s));
    }
    rep.margins.push_back(best);
    rep.margin_scale.push_back(e.sigma_e * std::sqrt(double(cfg.d_e)));
  }
  return rep;
}

}  // namespace irss

#endif  // IRSS_SCM_HPP_
