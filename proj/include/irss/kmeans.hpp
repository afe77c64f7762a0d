#ifndef IRSS_KMEANS_HPP_
#define IRSS_KMEANS_HPP_

// Lloyd's k-means with k-means++ seeding. Used twice per training run: over
// style statistics to produce pseudo-style labels and over extracted
// features to produce environment labels.
//
// Seeding draws and every floating-point reduction iterate over a canonical
// (lexicographically sorted) point order, so permuting input rows permutes
// the assignments identically under the same seed. Ties in the nearest-
// centroid search break toward the lowest centroid index. An empty cluster
// is re-seeded at the point farthest from its assigned centroid.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "irss/common.hpp"
#include "irss/dataset.hpp"

namespace irss {

struct KMeansResult {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;  // k * dim, row-major
  std::vector<int> assignments;   // n entries in 0..k-1
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;  // one entry per assignment pass
};

namespace detail {

inline double sqdist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

inline std::vector<std::size_t> canonical_order(std::span<const double> pts,
                                                std::size_t n, std::size_t dim) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double* pa = pts.data() + a * dim;
    const double* pb = pts.data() + b * dim;
    return std::lexicographical_compare(pa, pa + dim, pb, pb + dim);
  });
  return order;
}

inline KMeansResult kmeans_single(std::span<const double> pts, std::size_t n,
                                  std::size_t dim, std::size_t k, std::uint64_t seed,
                                  int max_iter, double tol,
                                  std::span<const std::size_t> canon) {
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.k = k;
  res.dim = dim;
  res.centroids.assign(k * dim, 0.0);
  res.assignments.assign(n, 0);

  // k-means++ seeding over the canonical order.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  {
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t c0 = canon[first(rng)];
    std::copy_n(pts.data() + c0 * dim, dim, res.centroids.data());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = sqdist(pts.data() + i * dim, res.centroids.data(), dim);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i : canon) total += d2[i];
      std::size_t chosen = canon[0];
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        double cum = 0.0;
        for (std::size_t i : canon) {
          cum += d2[i];
          if (cum > target) {
            chosen = i;
            break;
          }
        }
      } else {
        std::uniform_int_distribution<std::size_t> any(0, n - 1);
        chosen = canon[any(rng)];
      }
      double* cent = res.centroids.data() + c * dim;
      std::copy_n(pts.data() + chosen * dim, dim, cent);
      for (std::size_t i = 0; i < n; ++i)
        d2[i] = std::min(d2[i], sqdist(pts.data() + i * dim, cent, dim));
    }
  }

  auto assign_pass = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = pts.data() + i * dim;
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        double d = sqdist(p, res.centroids.data() + c * dim, dim);
        if (d < best) {
          best = d;
          best_c = int(c);
        }
      }
      res.assignments[i] = best_c;
      d2[i] = best;
    }
    double inertia = 0.0;
    for (std::size_t i : canon) inertia += d2[i];
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
  };

  assign_pass();
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  std::vector<char> taken(n);
  for (int it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i : canon) {
      std::size_t c = std::size_t(res.assignments[i]);
      counts[c] += 1;
      const double* p = pts.data() + i * dim;
      double* s = sums.data() + c * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
    }
    std::fill(taken.begin(), taken.end(), 0);
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double* cent = res.centroids.data() + c * dim;
      std::vector<double> next(dim);
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) next[j] = sums[c * dim + j] / double(counts[c]);
      } else {
        // Re-seed at the not-yet-taken point farthest from its centroid.
        double far = -1.0;
        std::size_t far_i = canon[0];
        for (std::size_t i : canon)
          if (!taken[i] && d2[i] > far) {
            far = d2[i];
            far_i = i;
          }
        taken[far_i] = 1;
        std::copy_n(pts.data() + far_i * dim, dim, next.data());
      }
      shift = std::max(shift, std::sqrt(sqdist(cent, next.data(), dim)));
      std::copy_n(next.data(), dim, cent);
    }
    assign_pass();
    if (shift < tol) break;
  }
  return res;
}

}  // namespace detail

inline KMeansResult kmeans(std::span<const double> points, std::size_t n, std::size_t dim,
                           std::size_t k, std::uint64_t seed, int max_iter = 100,
                           double tol = 1e-6, int restarts = 1) {
  if (k < 1) throw config_error("kmeans: k must be >= 1");
  if (n < k) throw config_error("kmeans: fewer points than clusters");
  if (dim < 1 || points.size() != n * dim) throw shape_error("kmeans: bad point matrix");
  if (!all_finite(points)) throw contract_error("kmeans: non-finite points");
  if (restarts < 1) throw config_error("kmeans: restarts must be >= 1");

  auto canon = detail::canonical_order(points, n, dim);
  KMeansResult best;
  for (int r = 0; r < restarts; ++r) {
    KMeansResult res = detail::kmeans_single(points, n, dim, k, mix_seed(seed, std::uint64_t(r)),
                                             max_iter, tol, canon);
    if (r == 0 || res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

// Clusters the style statistics of the full training set into S pseudo-style
// labels. Runs once per bigstep.
inline KMeansResult assign_style_labels(Dataset& ds, std::span<const double> sdf_matrix,
                                        std::size_t sdf_dim, std::size_t S,
                                        std::uint64_t seed) {
  KMeansResult res = kmeans(sdf_matrix, ds.size(), sdf_dim, S, seed);
  for (std::size_t i = 0; i < ds.size(); ++i)
    ds.samples[i].pseudo_style = res.assignments[i];
  return res;
}

// Clusters minibatch features into environment labels. A minibatch smaller
// than k_env falls back to one cluster per point.
inline KMeansResult assign_env_labels(Dataset& ds, std::span<const std::size_t> batch_idx,
                                      std::span<const double> features, std::size_t feat_dim,
                                      std::size_t k_env, std::uint64_t seed) {
  std::size_t m = batch_idx.size();
  std::size_t k = std::min(k_env, m);
  KMeansResult res = kmeans(features, m, feat_dim, k, seed);
  for (std::size_t t = 0; t < m; ++t)
    ds.samples[batch_idx[t]].env_label = res.assignments[t];
  return res;
}

}  // namespace irss

#endif  // IRSS_KMEANS_HPP_
