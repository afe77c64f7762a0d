#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "irss/sdf.hpp"
#include "irss/styled.hpp"
#include "test_support.hpp"

using namespace irss;

namespace {

// Extractor whose first layer output equals the input image (1x1 conv with
// unit weight), so sdf statistics can be checked against hand values.
struct PassThrough {
  Architecture arch;
  ModelParams params;
  PassThrough(std::size_t h, std::size_t w) {
    arch.input_shape = {1, h, w};
    arch.extractor = {{LayerKind::conv2d, 1, 1}, {LayerKind::flatten},
                      {LayerKind::affine, 2}};
    arch.classes = 2;
    arch.styles = 1;
    arch.sdf_taps = {0};
    params = init_params(arch, 1);
    params.theta_f[0].tensor.mutable_value()[0] = 1.0;  // conv weight
    params.theta_f[1].tensor.mutable_value()[0] = 0.0;  // conv bias
  }
};

}  // namespace

TEST_CASE("constant feature map gives mean c and zero variance") {
  PassThrough pt(4, 4);
  std::vector<double> img(16, 2.5);
  SdfVector v = compute_sdf(pt.params, pt.arch, img, pt.arch.sdf_taps);
  REQUIRE(v.values.size() == 2);
  REQUIRE(v.values[0] == Catch::Approx(2.5));
  REQUIRE(v.values[1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("population variance on a 2x2 map") {
  PassThrough pt(2, 2);
  std::vector<double> img = {1.0, 3.0, 1.0, 3.0};
  SdfVector v = compute_sdf(pt.params, pt.arch, img, pt.arch.sdf_taps);
  REQUIRE(v.values[0] == Catch::Approx(2.0));
  REQUIRE(v.values[1] == Catch::Approx(1.0));
}

TEST_CASE("sdf length is twice the total tapped channels") {
  Architecture arch;
  arch.input_shape = {1, 8, 8};
  arch.extractor = {{LayerKind::conv2d, 4, 1}, {LayerKind::relu},
                    {LayerKind::conv2d, 8, 1}, {LayerKind::relu},
                    {LayerKind::flatten},      {LayerKind::affine, 3}};
  arch.classes = 2;
  arch.styles = 1;
  ModelParams params = init_params(arch, 3);
  std::mt19937_64 rng(4);
  std::vector<double> img = irss::test::random_vec(64, rng);
  std::vector<std::size_t> taps = {1, 3};  // channels 4 and 8
  SdfVector v = compute_sdf(params, arch, img, taps);
  REQUIRE(v.values.size() == 24);
  REQUIRE(v.layer_channels == std::vector<std::size_t>{4, 8});
}

TEST_CASE("sdf is invariant to spatial permutation within a channel") {
  PassThrough pt(4, 4);
  std::mt19937_64 rng(9);
  std::vector<double> img = irss::test::random_vec(16, rng);
  SdfVector a = compute_sdf(pt.params, pt.arch, img, pt.arch.sdf_taps);
  std::shuffle(img.begin(), img.end(), rng);
  SdfVector b = compute_sdf(pt.params, pt.arch, img, pt.arch.sdf_taps);
  REQUIRE(a.values[0] == Catch::Approx(b.values[0]));
  REQUIRE(a.values[1] == Catch::Approx(b.values[1]));
}

TEST_CASE("tapping a layer without spatial extent is an error") {
  PassThrough pt(4, 4);
  std::vector<std::size_t> taps = {2};  // affine output
  std::vector<double> img(16, 0.0);
  REQUIRE_THROWS_AS(compute_sdf(pt.params, pt.arch, img, taps), contract_error);
}

TEST_CASE("styles separate in sdf space on generated images") {
  StyleImageConfig cfg = StyleImageConfig::defaults();
  Dataset ds = sample_styled_images(cfg, 0, 120, 21);

  Architecture arch;
  arch.input_shape = {1, 16, 16};
  arch.extractor = {{LayerKind::conv2d, 6, 3}, {LayerKind::relu}, {LayerKind::meanpool2},
                    {LayerKind::conv2d, 12, 3}, {LayerKind::relu}, {LayerKind::flatten},
                    {LayerKind::affine, 16},   {LayerKind::relu}};
  arch.classes = 2;
  arch.styles = 1;
  arch.sdf_taps = {1, 4};
  ModelParams params = init_params(arch, 33);

  SdfBatch sdf = compute_sdf_batch(params, arch, ds.all_x(), arch.sdf_taps);
  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = i + 1; j < ds.size(); ++j) {
      double d = 0.0;
      for (std::size_t t = 0; t < sdf.dim; ++t) {
        double diff = sdf.matrix[i * sdf.dim + t] - sdf.matrix[j * sdf.dim + t];
        d += diff * diff;
      }
      if (ds.samples[i].true_style == ds.samples[j].true_style) {
        within += std::sqrt(d);
        ++nw;
      } else {
        between += std::sqrt(d);
        ++nb;
      }
    }
  REQUIRE(between / double(nb) > within / double(nw));
}
