#ifndef IRSS_STYLED_HPP_
#define IRSS_STYLED_HPP_

// Synthetic styled-image family. Content = class shape + spurious corner
// motif; a parametric style (channel gain/bias and a fixed-phase texture)
// renders the content into the final image, followed by optional pixel
// noise. The motif identity agrees with the label at a per-environment rate
// rho_e, which is what makes it spurious.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "irss/common.hpp"
#include "irss/dataset.hpp"

namespace irss {

struct StyleSpec {
  double gain = 1.0;
  double bias = 0.0;
  double tex_amp = 0.0;
  double tex_freq = 0.0;
};

struct StyleImageConfig {
  std::size_t side = 16;
  std::size_t classes = 2;  // class shape templates, up to 4
  std::vector<StyleSpec> styles;
  std::size_t n_motifs = 2;  // corner patch motifs, up to 4
  std::vector<double> rho;   // per-environment label/motif agreement rate
  double sigma_pix = 0.05;

  static StyleImageConfig defaults() {
    StyleImageConfig cfg;
    cfg.styles = {{1.0, 0.0, 0.0, 0.0}, {1.0, 0.4, 0.5, 4.0}};
    cfg.rho = {0.95, 0.75};
    return cfg;
  }

  void validate() const {
    if (side < 12) throw config_error("styled: side must be >= 12");
    if (classes < 2 || classes > 4) throw config_error("styled: classes must be 2..4");
    if (styles.empty()) throw config_error("styled: need at least one style");
    if (n_motifs < 2 || n_motifs > 4) throw config_error("styled: n_motifs must be 2..4");
    if (rho.empty()) throw config_error("styled: need at least one environment");
    for (double r : rho)
      if (!(r >= 0.0 && r <= 1.0)) throw config_error("styled: rho must lie in [0,1]");
    if (rho.size() > 1) {
      bool all_same = true;
      for (double r : rho) all_same = all_same && r == rho.front();
      if (all_same)
        throw config_error("styled: training environments must not all share one rho");
    }
    if (sigma_pix < 0.0) throw config_error("styled: sigma_pix must be >= 0");
  }
};

namespace detail {

// Class shape templates on an s x s grid, drawn in the central region.
inline void draw_class_shape(std::vector<double>& img, std::size_t s, int y) {
  std::size_t lo = s / 4, hi = s - s / 4 - 1;
  auto at = [&](std::size_t i, std::size_t j) -> double& { return img[i * s + j]; };
  switch (y) {
    case 0:  // hollow square
      for (std::size_t t = lo; t <= hi; ++t) {
        at(lo, t) = 1.0;
        at(hi, t) = 1.0;
        at(t, lo) = 1.0;
        at(t, hi) = 1.0;
      }
      break;
    case 1:  // plus
      for (std::size_t t = lo; t <= hi; ++t) {
        at(s / 2, t) = 1.0;
        at(t, s / 2) = 1.0;
      }
      break;
    case 2:  // diagonal cross
      for (std::size_t t = lo; t <= hi; ++t) {
        at(t, t) = 1.0;
        at(t, s - 1 - t) = 1.0;
      }
      break;
    default:  // diamond
      for (std::size_t t = 0; t <= hi - lo; ++t) {
        std::size_t off = t <= (hi - lo) / 2 ? t : hi - lo - t;
        at(lo + t, s / 2 - off) = 1.0;
        at(lo + t, s / 2 + off) = 1.0;
      }
      break;
  }
}

// 3x3 filled corner patches: TL, BR, TR, BL.
inline void draw_motif(std::vector<double>& img, std::size_t s, int m) {
  std::size_t r0 = (m == 0 || m == 2) ? 0 : s - 3;
  std::size_t c0 = (m == 0 || m == 3) ? 0 : s - 3;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) img[(r0 + i) * s + (c0 + j)] = 1.0;
}

}  // namespace detail

inline Dataset sample_styled_images(const StyleImageConfig& cfg, std::size_t env_index,
                                    std::size_t n, std::uint64_t seed) {
  cfg.validate();
  if (env_index >= cfg.rho.size())
    throw std::out_of_range("sample_styled_images: environment index out of range");
  if (n < 1) throw config_error("sample_styled_images: n must be >= 1");
  double rho = cfg.rho[env_index];
  std::size_t s = cfg.side;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, int(cfg.classes) - 1);
  std::uniform_int_distribution<int> pick_style(0, int(cfg.styles.size()) - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset ds;
  ds.x_shape = {1, s, s};
  ds.classes = cfg.classes;
  ds.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample& smp = ds.samples[i];
    smp.y = pick_class(rng);
    smp.true_style = pick_style(rng);
    smp.true_env = int(env_index);

    int agree_motif = smp.y % int(cfg.n_motifs);
    int motif = agree_motif;
    if (unif(rng) >= rho) {
      int other = int(std::floor(unif(rng) * double(cfg.n_motifs - 1)));
      other = std::min(other, int(cfg.n_motifs) - 2);
      motif = other >= agree_motif ? other + 1 : other;
    }

    std::vector<double> content(s * s, 0.0);
    detail::draw_class_shape(content, s, smp.y);
    detail::draw_motif(content, s, motif);

    const StyleSpec& st = cfg.styles[std::size_t(smp.true_style)];
    smp.x.resize(s * s);
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < s; ++c) {
        double tex = st.tex_amp * std::sin(2.0 * std::numbers::pi * st.tex_freq *
                                           double(r) / double(s)) *
                     std::sin(2.0 * std::numbers::pi * st.tex_freq * double(c) / double(s));
        smp.x[r * s + c] = st.gain * content[r * s + c] + st.bias + tex;
      }
    if (cfg.sigma_pix > 0.0)
      for (double& p : smp.x) p += cfg.sigma_pix * gauss(rng);
  }
  return ds;
}

}  // namespace irss

#endif  // IRSS_STYLED_HPP_
