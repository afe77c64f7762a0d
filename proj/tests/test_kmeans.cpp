#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "irss/kmeans.hpp"
#include "irss/metrics.hpp"
#include "test_support.hpp"

using namespace irss;

namespace {

// Oracle: best inertia over all 2^n two-colorings (n <= 12 or so).
double best_two_partition_inertia(const std::vector<double>& pts, std::size_t n,
                                  std::size_t dim) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (std::size_t(1) << n); ++mask) {
    std::vector<double> c0(dim, 0.0), c1(dim, 0.0);
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool in1 = (mask >> i) & 1;
      for (std::size_t j = 0; j < dim; ++j) (in1 ? c1[j] : c0[j]) += pts[i * dim + j];
      (in1 ? n1 : n0) += 1;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      c0[j] /= double(n0);
      c1[j] /= double(n1);
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* c = ((mask >> i) & 1) ? c1.data() : c0.data();
      for (std::size_t j = 0; j < dim; ++j) {
        double d = pts[i * dim + j] - c[j];
        inertia += d * d;
      }
    }
    best = std::min(best, inertia);
  }
  return best;
}

}  // namespace

TEST_CASE("all identical points with k=1") {
  std::vector<double> pts = {2.0, 3.0, 2.0, 3.0, 2.0, 3.0};
  KMeansResult r = kmeans(pts, 3, 2, 1, 42);
  REQUIRE(r.centroids[0] == Catch::Approx(2.0));
  REQUIRE(r.centroids[1] == Catch::Approx(3.0));
  REQUIRE(r.inertia == Catch::Approx(0.0));
}

TEST_CASE("two well-separated pairs split correctly") {
  std::vector<double> pts = {0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0};
  KMeansResult r = kmeans(pts, 4, 2, 2, 7);
  REQUIRE(r.assignments[0] == r.assignments[1]);
  REQUIRE(r.assignments[2] == r.assignments[3]);
  REQUIRE(r.assignments[0] != r.assignments[2]);
  // centroids are (0, 0.5) and (10, 0.5) in some order
  std::vector<double> xs = {r.centroids[0], r.centroids[2]};
  std::sort(xs.begin(), xs.end());
  REQUIRE(xs[0] == Catch::Approx(0.0));
  REQUIRE(xs[1] == Catch::Approx(10.0));
  REQUIRE(r.centroids[1] == Catch::Approx(0.5));
  REQUIRE(r.centroids[3] == Catch::Approx(0.5));
  // matches the exhaustive two-partition optimum
  REQUIRE(r.inertia == Catch::Approx(best_two_partition_inertia(pts, 4, 2)));
}

TEST_CASE("k equal to n reaches zero inertia") {
  std::mt19937_64 rng(3);
  std::vector<double> pts = irss::test::random_vec(5 * 3, rng);
  KMeansResult r = kmeans(pts, 5, 3, 5, 11, 100, 1e-6, 4);
  REQUIRE(r.inertia == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("inertia history is non-increasing") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> pts = irss::test::random_vec(40 * 4, rng, -3.0, 3.0);
    KMeansResult r = kmeans(pts, 40, 4, 5, std::uint64_t(trial));
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      REQUIRE(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-12);
  }
}

TEST_CASE("assignments index the nearest centroid") {
  std::mt19937_64 rng(9);
  std::vector<double> pts = irss::test::random_vec(30 * 3, rng);
  KMeansResult r = kmeans(pts, 30, 3, 4, 13);
  for (std::size_t i = 0; i < 30; ++i) {
    double assigned = 0.0, best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < 4; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        double t = pts[i * 3 + j] - r.centroids[c * 3 + j];
        d += t * t;
      }
      if (std::size_t(r.assignments[i]) == c) assigned = d;
      best = std::min(best, d);
    }
    REQUIRE(assigned == Catch::Approx(best));
  }
}

TEST_CASE("permuting rows permutes assignments identically") {
  std::mt19937_64 rng(17);
  std::size_t n = 25, dim = 3;
  std::vector<double> pts = irss::test::random_vec(n * dim, rng);
  KMeansResult base = kmeans(pts, n, dim, 3, 99);

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> shuffled(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(pts.data() + perm[i] * dim, dim, shuffled.data() + i * dim);
  KMeansResult moved = kmeans(shuffled, n, dim, 3, 99);
  for (std::size_t i = 0; i < n; ++i)
    REQUIRE(moved.assignments[i] == base.assignments[perm[i]]);
}

TEST_CASE("kmeans is deterministic given a seed") {
  std::mt19937_64 rng(23);
  std::vector<double> pts = irss::test::random_vec(50 * 2, rng);
  KMeansResult a = kmeans(pts, 50, 2, 4, 1234);
  KMeansResult b = kmeans(pts, 50, 2, 4, 1234);
  REQUIRE(a.assignments == b.assignments);
  REQUIRE(a.centroids == b.centroids);
}

TEST_CASE("fewer points than clusters is rejected") {
  std::vector<double> pts = {0.0, 1.0};
  REQUIRE_THROWS_AS(kmeans(pts, 2, 1, 3, 0), config_error);
}

TEST_CASE("exhaustive two-partition optimality on random instances") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 5 + std::size_t(trial % 4);
    std::vector<double> pts = irss::test::random_vec(n * 2, rng, -2.0, 2.0);
    KMeansResult r = kmeans(pts, n, 2, 2, std::uint64_t(trial), 100, 1e-9, 24);
    double best = best_two_partition_inertia(pts, n, 2);
    REQUIRE(r.inertia <= best * (1.0 + 1e-9) + 1e-12);
  }
}

TEST_CASE("style label assignment covers the valid range and is recoverable") {
  // two obvious style clusters in a 2-d statistic space
  Dataset ds;
  ds.x_shape = {1};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<double> sdf;
  for (int i = 0; i < 60; ++i) {
    Sample s;
    s.x = {0.0};
    s.true_style = i % 2;
    ds.samples.push_back(s);
    double cx = s.true_style == 0 ? 0.0 : 4.0;
    sdf.push_back(cx + g(rng));
    sdf.push_back(-cx + g(rng));
  }
  KMeansResult r = assign_style_labels(ds, sdf, 2, 2, 5);
  std::vector<int> truth, assigned;
  for (const Sample& s : ds.samples) {
    truth.push_back(s.true_style);
    assigned.push_back(s.pseudo_style);
    REQUIRE(s.pseudo_style >= 0);
    REQUIRE(s.pseudo_style < 2);
  }
  REQUIRE(adjusted_rand_index(assigned, truth) == Catch::Approx(1.0));
  REQUIRE(r.iterations >= 1);
}

TEST_CASE("style labels with S=1 are all zero") {
  Dataset ds;
  ds.x_shape = {1};
  std::vector<double> sdf;
  for (int i = 0; i < 10; ++i) {
    Sample s;
    s.x = {double(i)};
    ds.samples.push_back(s);
    sdf.push_back(double(i));
  }
  assign_style_labels(ds, sdf, 1, 1, 0);
  for (const Sample& s : ds.samples) REQUIRE(s.pseudo_style == 0);
}

TEST_CASE("env labels fall back when the minibatch is small") {
  Dataset ds;
  ds.x_shape = {1};
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.x = {double(i)};
    ds.samples.push_back(s);
  }
  std::vector<std::size_t> idx = {0, 1, 2};
  std::vector<double> feats = {0.0, 1.0, 2.0};
  KMeansResult r = assign_env_labels(ds, idx, feats, 1, 5, 3);
  REQUIRE(r.k == 3);  // clamped to minibatch size
  for (const Sample& s : ds.samples) {
    REQUIRE(s.env_label >= 0);
    REQUIRE(s.env_label < 3);
  }
}

TEST_CASE("env labels with k_env=1 give a single environment") {
  Dataset ds;
  ds.x_shape = {1};
  for (int i = 0; i < 6; ++i) {
    Sample s;
    s.x = {double(i)};
    ds.samples.push_back(s);
  }
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  std::mt19937_64 rng(1);
  std::vector<double> feats = irss::test::random_vec(6 * 2, rng);
  assign_env_labels(ds, idx, feats, 2, 1, 9);
  for (const Sample& s : ds.samples) REQUIRE(s.env_label == 0);
}
