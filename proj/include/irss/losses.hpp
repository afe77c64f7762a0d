#ifndef IRSS_LOSSES_HPP_
#define IRSS_LOSSES_HPP_

// Loss terms and their composition: per-environment cross-entropy, the
// adversarial style loss (wired through gradient reversal), the entropy
// regularizer, and the two invariance penalties (IRMv1 in closed first-order
// form, BIRM via a finite inner refinement of the per-environment
// classifier).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "irss/common.hpp"
#include "irss/layers.hpp"
#include "irss/tensor.hpp"

namespace irss {

enum class PenaltyKind { irmv1, birm };
enum class EntropySign { paper, minimize_entropy };

struct LossWeights {
  double lambda_adv = 0.0;
  double lambda_ent = 0.0;
  double lambda_irm = 0.0;
  PenaltyKind penalty = PenaltyKind::irmv1;

  void validate() const {
    if (!std::isfinite(lambda_adv) || !std::isfinite(lambda_ent) ||
        !std::isfinite(lambda_irm))
      throw config_error("loss weights must be finite");
    if (lambda_adv < 0.0) throw config_error("lambda_adv must be >= 0");
    if (lambda_irm < 0.0) throw config_error("lambda_irm must be >= 0");
  }
};

struct EnvSlice {
  int env = 0;
  std::vector<std::size_t> members;  // indices into the minibatch
};

// Partitions minibatch positions by environment label; empty slices are
// never materialized. Labels must be assigned (>= 0).
inline std::vector<EnvSlice> build_env_slices(std::span<const int> env_labels) {
  std::map<int, std::vector<std::size_t>> by_env;
  for (std::size_t i = 0; i < env_labels.size(); ++i) {
    if (env_labels[i] < 0) throw contract_error("environment label unset");
    by_env[env_labels[i]].push_back(i);
  }
  std::vector<EnvSlice> out;
  for (auto& [e, members] : by_env) out.push_back({e, std::move(members)});
  return out;
}

// -(1/N) sum_i log p_{y_i}, probabilities clamped at 1e-12 before the log.
inline Tensor erm_loss(const Tensor& class_probs, std::span<const int> labels) {
  if (class_probs.shape().size() != 2 || class_probs.shape()[0] != labels.size())
    throw shape_error("erm_loss: probs/labels mismatch");
  std::size_t C = class_probs.shape()[1];
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= C)
      throw contract_error("erm_loss: label out of range");
    idx[i] = std::size_t(labels[i]);
  }
  return neg(mean_all(log_clamped(pick_per_row(class_probs, std::move(idx)))));
}

// Cross-entropy of the style discriminator against pseudo-style labels.
// Callers route the discriminator input through grad_reverse so a single
// backward pass trains the discriminator while the extractor is pushed the
// other way.
inline Tensor adv_loss(const Tensor& style_probs, std::span<const int> pseudo_styles) {
  for (int s : pseudo_styles)
    if (s < 0) throw contract_error("adv_loss: pseudo-style label unset");
  return erm_loss(style_probs, pseudo_styles);
}

// Mean Shannon entropy of the rows. The sign applied in the objective is a
// run-config choice; this op always returns the non-negative entropy.
inline Tensor ent_loss(const Tensor& class_probs) {
  if (class_probs.shape().size() != 2) throw shape_error("ent_loss: expected rank-2 probs");
  double n = double(class_probs.shape()[0]);
  return scale(sum_all(mul(class_probs, log_clamped(class_probs))), -1.0 / n);
}

// IRMv1 with the dummy-classifier derivative in closed form: for environment
// e, g_e = (1/|D_e|) sum_i <softmax(z_i) - onehot(y_i), z_i> equals
// d/dw ell_e(w * z)|_{w=1}, so sum_e g_e^2 differentiates on the ordinary
// first-order tape.
inline Tensor irmv1_penalty(const std::vector<EnvSlice>& slices, const Tensor& logits,
                            std::span<const int> labels) {
  if (slices.empty()) throw contract_error("irmv1_penalty: no environment slices");
  if (logits.shape().size() != 2 || logits.shape()[0] != labels.size())
    throw shape_error("irmv1_penalty: logits/labels mismatch");
  std::size_t C = logits.shape()[1];
  Tensor penalty;
  for (const EnvSlice& sl : slices) {
    Tensor z = gather_rows(logits, sl.members);
    Tensor p = softmax_rows(z);
    std::vector<double> onehot(sl.members.size() * C, 0.0);
    for (std::size_t t = 0; t < sl.members.size(); ++t) {
      int y = labels[sl.members[t]];
      if (y < 0 || std::size_t(y) >= C)
        throw contract_error("irmv1_penalty: label out of range");
      onehot[t * C + std::size_t(y)] = 1.0;
    }
    Tensor diff = sub(p, Tensor::constant({sl.members.size(), C}, std::move(onehot)));
    Tensor g_e = scale(sum_all(mul(diff, z)), 1.0 / double(sl.members.size()));
    Tensor sq = square(g_e);
    penalty = penalty.defined() ? add(penalty, sq) : sq;
  }
  return penalty;
}

struct BirmInner {
  int steps = 5;
  double lr = 0.1;
};

// Per-environment classifier refinement, run off-tape on frozen features.
struct BirmEnvSolution {
  std::vector<double> W;  // d x C
  std::vector<double> b;  // C
};

namespace detail {

inline void softmax_row_inplace(double* z, std::size_t C) {
  double mx = z[0];
  for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, z[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    z[c] = std::exp(z[c] - mx);
    sum += z[c];
  }
  for (std::size_t c = 0; c < C; ++c) z[c] /= sum;
}

// Sum of log-likelihoods of `labels` under softmax(f W + b).
inline double loglik_sum(std::span<const double> feats, std::size_t d,
                         std::span<const std::size_t> members,
                         std::span<const int> labels, const std::vector<double>& W,
                         const std::vector<double>& b) {
  std::size_t C = b.size();
  std::vector<double> row(C);
  double total = 0.0;
  for (std::size_t t = 0; t < members.size(); ++t) {
    const double* f = feats.data() + members[t] * d;
    for (std::size_t c = 0; c < C; ++c) {
      double z = b[c];
      for (std::size_t j = 0; j < d; ++j) z += f[j] * W[j * C + c];
      row[c] = z;
    }
    softmax_row_inplace(row.data(), C);
    total += std::log(std::max(row[std::size_t(labels[members[t]])], 1e-12));
  }
  return total;
}

}  // namespace detail

// Gradient-descent refinement of a copy of theta_y on one environment's
// frozen features (mean NLL objective, plain GD).
inline BirmEnvSolution birm_inner_solve(std::span<const double> feats, std::size_t d,
                                        std::span<const std::size_t> members,
                                        std::span<const int> labels,
                                        std::span<const double> Wy,
                                        std::span<const double> by,
                                        const BirmInner& inner) {
  if (inner.steps < 1) throw config_error("birm: inner steps must be >= 1");
  std::size_t C = by.size();
  BirmEnvSolution sol{std::vector<double>(Wy.begin(), Wy.end()),
                      std::vector<double>(by.begin(), by.end())};
  std::size_t m = members.size();
  std::vector<double> p(C);
  std::vector<double> gW(d * C), gb(C);
  for (int step = 0; step < inner.steps; ++step) {
    std::fill(gW.begin(), gW.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t t = 0; t < m; ++t) {
      const double* f = feats.data() + members[t] * d;
      for (std::size_t c = 0; c < C; ++c) {
        double z = sol.b[c];
        for (std::size_t j = 0; j < d; ++j) z += f[j] * sol.W[j * C + c];
        p[c] = z;
      }
      detail::softmax_row_inplace(p.data(), C);
      p[std::size_t(labels[members[t]])] -= 1.0;
      for (std::size_t c = 0; c < C; ++c) {
        gb[c] += p[c];
        for (std::size_t j = 0; j < d; ++j) gW[j * C + c] += f[j] * p[c];
      }
    }
    double scale = inner.lr / double(m);
    for (std::size_t i = 0; i < gW.size(); ++i) sol.W[i] -= scale * gW[i];
    for (std::size_t c = 0; c < C; ++c) sol.b[c] -= scale * gb[c];
  }
  return sol;
}

struct BirmResult {
  Tensor penalty;      // term_best - term_shared, on tape
  double term_best;    // sum_e sum_i ln p(y_i | theta_f, theta_y^e); heads frozen
  Tensor term_shared;  // sum_e sum_i ln p(y_i | theta_f, theta_y); on tape
  std::vector<BirmEnvSolution> env_heads;  // frozen inner solutions, slice order
};

// D_BIRM = sum_e sum_{i in D_e} [ln p(y_i|theta_y^e) - ln p(y_i|theta_y)].
// The env-best heads theta_y^e are solved off-tape and held constant (no
// second-order differentiation), but both likelihood terms are evaluated on
// live features: the penalty gradient moves theta_f toward features where
// the shared head matches every env-best head, and reaches theta_y through
// the shared term only.
inline BirmResult birm_penalty(const std::vector<EnvSlice>& slices, const Tensor& features,
                               const Tensor& Wy, const Tensor& by,
                               std::span<const int> labels, const BirmInner& inner) {
  if (slices.empty()) throw contract_error("birm_penalty: no environment slices");
  if (inner.steps < 1) throw config_error("birm: inner steps must be >= 1");
  std::size_t d = features.shape()[1];

  auto env_loglik = [&](const EnvSlice& sl, const Tensor& W, const Tensor& b) {
    Tensor probs = softmax_rows(add_bias(matmul(gather_rows(features, sl.members), W), b));
    std::vector<std::size_t> idx(sl.members.size());
    for (std::size_t t = 0; t < idx.size(); ++t)
      idx[t] = std::size_t(labels[sl.members[t]]);
    return sum_all(log_clamped(pick_per_row(probs, std::move(idx))));
  };

  BirmResult res;
  Tensor best, shared;
  for (const EnvSlice& sl : slices) {
    BirmEnvSolution sol = birm_inner_solve(features.value(), d, sl.members, labels,
                                           Wy.value(), by.value(), inner);
    Tensor lb = env_loglik(sl, Tensor::constant({d, by.size()}, sol.W),
                           Tensor::constant({by.size()}, sol.b));
    Tensor ls = env_loglik(sl, Wy, by);
    best = best.defined() ? add(best, lb) : lb;
    shared = shared.defined() ? add(shared, ls) : ls;
    res.env_heads.push_back(std::move(sol));
  }
  res.term_best = best.item();
  res.term_shared = shared;
  res.penalty = add(best, neg(shared));
  return res;
}

struct Batch {
  Tensor x;                       // (m, D)
  std::vector<int> y;
  std::vector<int> pseudo_style;  // required when lambda_adv > 0
  std::vector<int> env;           // required always (erm is summed per env)
};

struct TotalLossResult {
  Tensor total;
  double term_erm = 0.0;  // as-added values; they sum to total exactly
  double term_irm = 0.0;
  double term_ent = 0.0;
  double term_adv = 0.0;
  double raw_penalty = 0.0;  // unscaled diagnostics
  double raw_entropy = 0.0;
  double raw_adv = 0.0;
  bool disc_invoked = false;
  bool penalty_invoked = false;
};

// Relaxed objective: sum_e erm(D_e) + lambda_irm * sum_e D(e) + entropy term
// + adversarial term. The adversarial term enters with its forward value;
// the -lambda_adv coupling to theta_f is realized by the reversal layer on
// the gradient path.
inline TotalLossResult total_loss(const Batch& batch, const ModelParams& params,
                                  const Architecture& arch, const LossWeights& weights,
                                  EntropySign entropy_sign, const BirmInner& birm_inner) {
  weights.validate();
  TotalLossResult out;

  Tensor features = extract_features(params, arch, batch.x);
  Tensor logits = predictor_logits(params, features);
  Tensor probs = softmax_rows(logits);
  std::vector<EnvSlice> slices = build_env_slices(batch.env);

  // Per-environment ERM: mean within the environment, summed across them.
  Tensor erm;
  for (const EnvSlice& sl : slices) {
    std::vector<int> y_e(sl.members.size());
    for (std::size_t t = 0; t < y_e.size(); ++t) y_e[t] = batch.y[sl.members[t]];
    Tensor l_e = erm_loss(gather_rows(probs, sl.members), y_e);
    erm = erm.defined() ? add(erm, l_e) : l_e;
  }
  out.term_erm = erm.item();
  Tensor total = erm;

  if (weights.lambda_irm > 0.0) {
    Tensor penalty;
    if (weights.penalty == PenaltyKind::irmv1) {
      penalty = irmv1_penalty(slices, logits, batch.y);
    } else {
      penalty = birm_penalty(slices, features, detail::find_param(params.theta_y, "y.W"),
                             detail::find_param(params.theta_y, "y.b"), batch.y, birm_inner)
                    .penalty;
    }
    out.raw_penalty = penalty.item();
    Tensor term = scale(penalty, weights.lambda_irm);
    out.term_irm = term.item();
    total = add(total, term);
    out.penalty_invoked = true;
  }

  if (weights.lambda_ent != 0.0) {
    Tensor H = ent_loss(probs);
    out.raw_entropy = H.item();
    double sign = entropy_sign == EntropySign::minimize_entropy ? 1.0 : -1.0;
    Tensor term = scale(H, sign * weights.lambda_ent);
    out.term_ent = term.item();
    total = add(total, term);
  }

  if (weights.lambda_adv > 0.0) {
    Tensor reversed = grad_reverse(features, weights.lambda_adv);
    Tensor style_probs = softmax_rows(discriminator_logits(params, reversed));
    Tensor adv = adv_loss(style_probs, batch.pseudo_style);
    out.raw_adv = adv.item();
    out.term_adv = out.raw_adv;
    total = add(total, adv);
    out.disc_invoked = true;
  }

  out.total = total;
  return out;
}

}  // namespace irss

#endif  // IRSS_LOSSES_HPP_
