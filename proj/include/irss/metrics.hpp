#ifndef IRSS_METRICS_HPP_
#define IRSS_METRICS_HPP_

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "irss/common.hpp"

namespace irss {

// Chance-corrected agreement between two labelings of the same points.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty())
    throw contract_error("adjusted_rand_index: labelings must have equal nonzero size");
  std::map<std::pair<int, int>, std::size_t> joint;
  std::map<int, std::size_t> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  auto comb2 = [](std::size_t n) { return double(n) * double(n - 1) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (auto& [k, v] : joint) sum_ij += comb2(v);
  for (auto& [k, v] : ca) sum_a += comb2(v);
  for (auto& [k, v] : cb) sum_b += comb2(v);
  double total = comb2(a.size());
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (sum_ij - expected) / (max_index - expected);
}

inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw contract_error("accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return double(hit) / double(pred.size());
}

inline std::pair<double, double> mean_sd(std::span<const double> xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var = xs.size() > 1 ? var / double(xs.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace irss

#endif  // IRSS_METRICS_HPP_
