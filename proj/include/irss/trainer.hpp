#ifndef IRSS_TRAINER_HPP_
#define IRSS_TRAINER_HPP_

// End-to-end training loop: an outer bigstep refreshes pseudo-style labels
// by clustering style statistics of the full training set; each inner step
// samples a minibatch, refreshes environment labels by clustering current
// features, then takes one combined backward pass and applies the main
// optimizer to theta_f/theta_y and the discriminator optimizer to theta_s.
// The ERM / IRM-only / adversarial-only baselines are weight presets over
// the same loop.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "irss/common.hpp"
#include "irss/dataset.hpp"
#include "irss/kmeans.hpp"
#include "irss/layers.hpp"
#include "irss/losses.hpp"
#include "irss/metrics.hpp"
#include "irss/optim.hpp"
#include "irss/sdf.hpp"
#include "irss/tensor.hpp"

namespace irss {

enum class EnvSource { cluster, truth };

struct TrainConfig {
  LossWeights weights;
  EntropySign entropy_sign = EntropySign::minimize_entropy;
  std::size_t S = 1;      // style cluster count
  std::size_t k_env = 1;  // environment cluster count
  std::size_t bigsteps = 2;
  std::size_t steps = 100;  // inner steps per bigstep
  std::size_t batch_size = 64;
  OptKind opt_kind = OptKind::adam;
  OptHyper opt_hyper{.lr = 1e-4};
  BirmInner birm;
  std::uint64_t seed = 0;
  EnvSource env_source = EnvSource::cluster;
  bool env_cluster_full_set = false;  // ablation: cluster envs once per bigstep
  std::size_t disc_steps = 1;  // theta_s refreshes per iteration (extra ones
                               // re-fit the discriminator on detached features)
  double disc_lr = 0.2;        // plain-GD rate of the extra refits
  std::size_t log_every = 10;
  std::size_t metric_subsample = 1024;  // row metrics evaluated on a capped subset

  void validate() const {
    weights.validate();
    if (S < 1 || k_env < 1) throw config_error("train: S and k_env must be >= 1");
    if (bigsteps < 1 || steps < 1) throw config_error("train: counts must be >= 1");
    if (batch_size < 1) throw config_error("train: batch size must be >= 1");
    if (log_every < 1) throw config_error("train: log_every must be >= 1");
    if (birm.steps < 1) throw config_error("train: birm inner steps must be >= 1");
    if (disc_steps < 1) throw config_error("train: disc_steps must be >= 1");
    if (disc_lr <= 0.0) throw config_error("train: disc_lr must be positive");
  }
};

// One entry per optimizer step; complete term accounting.
struct StepTerms {
  std::uint64_t iter = 0;
  double total = 0.0, erm = 0.0, irm = 0.0, ent = 0.0, adv = 0.0;
  double env_inertia = 0.0;
};

// Periodic row with the heavier diagnostics; persisted as metrics.csv.
struct MetricsRow {
  std::uint64_t iter = 0;
  double loss_total = 0.0, loss_erm = 0.0, loss_irm = 0.0, loss_ent = 0.0, loss_adv = 0.0;
  double train_acc = 0.0;
  double ood_acc = 0.0;
  double style_probe_acc = 0.0;
  double env_inertia = 0.0;
};

struct RunStats {
  std::uint64_t disc_calls = 0;
  std::uint64_t penalty_calls = 0;
  std::uint64_t optimizer_steps = 0;
};

struct RunState {
  Architecture arch;
  ModelParams params;
  std::uint64_t iter = 0;
  std::vector<StepTerms> step_log;
  std::vector<MetricsRow> history;
  RunStats stats;
};

inline std::vector<int> predict_classes(const ModelParams& params, const Architecture& arch,
                                        const Dataset& ds,
                                        std::span<const std::size_t> idx) {
  NoGrad ng;
  ForwardResult fr = forward(params, arch, ds.batch_x(idx));
  std::size_t C = arch.classes;
  std::vector<int> pred(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double* row = fr.class_probs.value().data() + i * C;
    pred[i] = int(std::max_element(row, row + C) - row);
  }
  return pred;
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

// Linear probe for true_style on frozen features: fit on a seeded 70% split,
// report holdout accuracy. Datasets with a single style score 1.0 trivially.
inline double style_probe_accuracy(const ModelParams& params, const Architecture& arch,
                                   const Dataset& ds, std::uint64_t seed,
                                   std::size_t max_points = 2048, int probe_steps = 150) {
  int n_styles = 0;
  for (const Sample& s : ds.samples) n_styles = std::max(n_styles, s.true_style + 1);
  if (n_styles < 2) return 1.0;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx = all_indices(ds);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (idx.size() > max_points) idx.resize(max_points);
  std::size_t n_fit = std::max<std::size_t>(1, idx.size() * 7 / 10);
  if (n_fit == idx.size()) n_fit = idx.size() - 1;
  std::span<const std::size_t> fit_idx(idx.data(), n_fit);
  std::span<const std::size_t> hold_idx(idx.data() + n_fit, idx.size() - n_fit);

  Tensor feats_all = [&] {
    NoGrad ng;
    return extract_features(params, arch, ds.batch_x(idx));
  }();
  std::size_t d = feats_all.shape()[1];
  auto take = [&](std::span<const std::size_t> which, std::size_t offset) {
    std::vector<double> v(which.size() * d);
    for (std::size_t t = 0; t < which.size(); ++t)
      std::copy_n(feats_all.value().data() + (offset + t) * d, d, v.data() + t * d);
    return Tensor::constant({which.size(), d}, std::move(v));
  };
  Tensor f_fit = take(fit_idx, 0);
  Tensor f_hold = take(hold_idx, n_fit);
  std::vector<int> y_fit(n_fit), y_hold(hold_idx.size());
  for (std::size_t t = 0; t < n_fit; ++t) y_fit[t] = ds.samples[fit_idx[t]].true_style;
  for (std::size_t t = 0; t < hold_idx.size(); ++t)
    y_hold[t] = ds.samples[hold_idx[t]].true_style;

  Tensor W = Tensor::param({d, std::size_t(n_styles)},
                           std::vector<double>(d * std::size_t(n_styles), 0.0));
  Tensor b = Tensor::param({std::size_t(n_styles)},
                           std::vector<double>(std::size_t(n_styles), 0.0));
  Optimizer opt(OptKind::adam, OptHyper{.lr = 0.05});
  std::vector<NamedParam> group{{"probe.W", W}, {"probe.b", b}};
  for (int step = 0; step < probe_steps; ++step) {
    Tensor probs = softmax_rows(add_bias(matmul(f_fit, W), b));
    Tensor loss = erm_loss(probs, y_fit);
    backward(loss);
    opt.step(group);
  }
  Tensor probs = softmax_rows(add_bias(matmul(f_hold, W), b));
  std::vector<int> pred(hold_idx.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double* row = probs.value().data() + i * std::size_t(n_styles);
    pred[i] = int(std::max_element(row, row + n_styles) - row);
  }
  return accuracy(pred, y_hold);
}

struct EvalReport {
  double acc = 0.0;
  std::map<int, double> acc_by_true_env;
  std::map<int, double> acc_by_true_style;
  double style_probe_acc = 0.0;
};

inline EvalReport evaluate(const ModelParams& params, const Architecture& arch,
                           const Dataset& ds, std::uint64_t probe_seed = 17) {
  EvalReport rep;
  auto idx = all_indices(ds);
  std::vector<int> pred = predict_classes(params, arch, ds, idx);
  std::vector<int> truth = ds.labels(idx);
  rep.acc = accuracy(pred, truth);
  std::map<int, std::pair<std::size_t, std::size_t>> by_env, by_style;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    bool hit = pred[i] == truth[i];
    auto& e = by_env[ds.samples[i].true_env];
    e.first += hit;
    e.second += 1;
    auto& s = by_style[ds.samples[i].true_style];
    s.first += hit;
    s.second += 1;
  }
  for (auto& [k, v] : by_env) rep.acc_by_true_env[k] = double(v.first) / double(v.second);
  for (auto& [k, v] : by_style)
    rep.acc_by_true_style[k] = double(v.first) / double(v.second);
  rep.style_probe_acc = style_probe_accuracy(params, arch, ds, probe_seed);
  return rep;
}

namespace detail {

inline double subset_accuracy(const ModelParams& params, const Architecture& arch,
                              const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> pred = predict_classes(params, arch, ds, idx);
  std::vector<int> truth = ds.labels(idx);
  return accuracy(pred, truth);
}

inline std::vector<std::size_t> capped_subset(std::size_t n, std::size_t cap,
                                              std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > cap) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cap);
  }
  return idx;
}

}  // namespace detail

// Algorithm: per bigstep, refresh pseudo-style labels from clustered style
// statistics; per step, refresh environment labels from clustered features,
// take one backward through the relaxed objective, and step the two
// optimizers. ood_eval, when given, feeds the OOD column of the metric rows.
inline RunState train(Dataset& data, const Architecture& arch, const TrainConfig& cfg,
                      const Dataset* ood_eval = nullptr) {
  cfg.validate();
  if (data.size() == 0) throw config_error("train: empty dataset");
  if (arch.classes != data.classes)
    throw config_error("train: architecture classes disagree with dataset");
  if (arch.styles != cfg.S)
    throw config_error("train: discriminator width must equal S");
  if (cfg.S > 1 && arch.sdf_taps.empty())
    throw config_error("train: S > 1 requires sdf tap layers with spatial extent");
  std::size_t n = data.size();
  std::size_t batch = std::min(cfg.batch_size, n);

  RunState rs;
  rs.arch = arch;
  rs.params = init_params(arch, mix_seed(cfg.seed, 1));
  Optimizer opt_main(cfg.opt_kind, cfg.opt_hyper);
  Optimizer opt_disc(cfg.opt_kind, cfg.opt_hyper);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 2));

  for (Sample& s : data.samples) {
    s.pseudo_style = 0;
    s.env_label = 0;
  }

  auto train_probe_idx =
      detail::capped_subset(n, cfg.metric_subsample, mix_seed(cfg.seed, 3));
  std::vector<std::size_t> eval_probe_idx;
  if (ood_eval)
    eval_probe_idx = detail::capped_subset(ood_eval->size(), cfg.metric_subsample,
                                           mix_seed(cfg.seed, 4));

  std::vector<std::size_t> perm = all_indices(data);
  auto probe_ds = ood_eval ? ood_eval : &data;

  for (std::size_t bigstep = 0; bigstep < cfg.bigsteps; ++bigstep) {
    if (cfg.S > 1) {
      SdfBatch sdf = compute_sdf_batch(rs.params, arch, data.all_x(), arch.sdf_taps);
      assign_style_labels(data, sdf.matrix, sdf.dim, cfg.S,
                          mix_seed(cfg.seed, 100 + bigstep));
    }
    double bigstep_env_inertia = 0.0;
    if (cfg.env_source == EnvSource::cluster && cfg.env_cluster_full_set) {
      NoGrad ng;
      Tensor feats = extract_features(rs.params, arch, data.all_x());
      auto idx = all_indices(data);
      KMeansResult kr =
          assign_env_labels(data, idx, feats.value(), feats.shape()[1],
                            cfg.k_env, mix_seed(cfg.seed, 200 + bigstep));
      bigstep_env_inertia = kr.inertia;
    }

    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    std::size_t cursor = 0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      try {
        if (cursor + batch > n) {
          std::shuffle(perm.begin(), perm.end(), shuffle_rng);
          cursor = 0;
        }
        std::span<const std::size_t> batch_idx(perm.data() + cursor, batch);
        cursor += batch;

        Batch b;
        b.x = data.batch_x(batch_idx);
        b.y.resize(batch);
        b.pseudo_style.resize(batch);
        b.env.resize(batch);
        for (std::size_t t = 0; t < batch; ++t) {
          const Sample& s = data.samples[batch_idx[t]];
          b.y[t] = s.y;
          b.pseudo_style[t] = s.pseudo_style;
        }

        double env_inertia = bigstep_env_inertia;
        if (cfg.env_source == EnvSource::truth) {
          for (std::size_t t = 0; t < batch; ++t)
            b.env[t] = data.samples[batch_idx[t]].true_env;
        } else if (cfg.env_cluster_full_set) {
          for (std::size_t t = 0; t < batch; ++t)
            b.env[t] = data.samples[batch_idx[t]].env_label;
        } else {
          NoGrad ng;
          Tensor feats = extract_features(rs.params, arch, b.x);
          KMeansResult kr =
              assign_env_labels(data, batch_idx, feats.value(), feats.shape()[1],
                                cfg.k_env, mix_seed(cfg.seed, 1000000 + rs.iter));
          env_inertia = kr.inertia;
          for (std::size_t t = 0; t < batch; ++t)
            b.env[t] = data.samples[batch_idx[t]].env_label;
        }

        TotalLossResult tl =
            total_loss(b, rs.params, arch, cfg.weights, cfg.entropy_sign, cfg.birm);
        backward(tl.total);
        opt_main.step(rs.params.theta_f);
        opt_main.step(rs.params.theta_y);
        if (tl.disc_invoked) {
          opt_disc.step(rs.params.theta_s);
          rs.stats.disc_calls += 1;
          // keep the discriminator near its argmin: extra refits on the
          // same minibatch with features held constant
          if (cfg.disc_steps > 1) {
            Tensor frozen = [&] {
              NoGrad ng;
              return extract_features(rs.params, arch, b.x);
            }();
            for (std::size_t k = 1; k < cfg.disc_steps; ++k) {
              Tensor probs = softmax_rows(discriminator_logits(rs.params, frozen));
              backward(adv_loss(probs, b.pseudo_style));
              for (auto& p : rs.params.theta_s) {
                auto node = p.tensor.node();
                for (std::size_t i = 0; i < node->value.size(); ++i)
                  node->value[i] -= cfg.disc_lr * node->grad[i];
              }
            }
          }
        }
        if (tl.penalty_invoked) rs.stats.penalty_calls += 1;
        rs.stats.optimizer_steps += 1;
        rs.iter += 1;

        rs.step_log.push_back({rs.iter, tl.total.item(), tl.term_erm, tl.term_irm,
                               tl.term_ent, tl.term_adv, env_inertia});

        if (rs.iter % cfg.log_every == 0) {
          MetricsRow row;
          row.iter = rs.iter;
          row.loss_total = tl.total.item();
          row.loss_erm = tl.term_erm;
          row.loss_irm = tl.term_irm;
          row.loss_ent = tl.term_ent;
          row.loss_adv = tl.term_adv;
          row.train_acc = detail::subset_accuracy(rs.params, arch, data, train_probe_idx);
          row.ood_acc = ood_eval ? detail::subset_accuracy(rs.params, arch, *ood_eval,
                                                           eval_probe_idx)
                                 : std::numeric_limits<double>::quiet_NaN();
          row.style_probe_acc = style_probe_accuracy(
              rs.params, arch, *probe_ds, mix_seed(cfg.seed, 500000 + rs.iter),
              std::min<std::size_t>(cfg.metric_subsample, 512), 100);
          row.env_inertia = env_inertia;
          rs.history.push_back(row);
        }
      } catch (const train_error&) {
        throw;
      } catch (const std::exception& e) {
        throw train_error(rs.iter, e.what());
      }
    }
  }
  return rs;
}

enum class BaselineKind { erm, irm_v1, adv_only };

// Baselines are weight configurations over the same loop: erm zeroes every
// lambda and collapses to one environment; irm_v1 keeps only the invariance
// penalty; adv_only keeps the adversarial (and entropy) terms.
inline TrainConfig baseline_config(BaselineKind kind, TrainConfig cfg) {
  switch (kind) {
    case BaselineKind::erm:
      cfg.weights.lambda_adv = 0.0;
      cfg.weights.lambda_ent = 0.0;
      cfg.weights.lambda_irm = 0.0;
      cfg.k_env = 1;
      break;
    case BaselineKind::irm_v1:
      cfg.weights.lambda_adv = 0.0;
      cfg.weights.lambda_ent = 0.0;
      cfg.weights.penalty = PenaltyKind::irmv1;
      break;
    case BaselineKind::adv_only:
      cfg.weights.lambda_irm = 0.0;
      cfg.k_env = 1;
      break;
  }
  return cfg;
}

inline RunState run_baseline(BaselineKind kind, Dataset& data, const Architecture& arch,
                             const TrainConfig& cfg, const Dataset* ood_eval = nullptr) {
  return train(data, arch, baseline_config(kind, cfg), ood_eval);
}

}  // namespace irss

#endif  // IRSS_TRAINER_HPP_
