#ifndef IRSS_SDF_HPP_
#define IRSS_SDF_HPP_

// Style-discriminative features: per-channel spatial mean and population
// variance of selected intermediate extractor outputs, concatenated in layer
// order as (means of layer m, variances of layer m). Computed with
// differentiation disabled; the values only feed the style clusterer.

#include <cstdint>
#include <string>
#include <vector>

#include "irss/common.hpp"
#include "irss/layers.hpp"
#include "irss/tensor.hpp"

namespace irss {

struct SdfVector {
  std::vector<double> values;                // 2 * sum of tapped channel counts
  std::vector<std::size_t> layer_channels;   // channel count per tapped layer
};

// Batch variant: returns one row of length 2*sum(C_m) per sample, flattened
// row-major into `matrix`.
struct SdfBatch {
  std::vector<double> matrix;
  std::size_t dim = 0;
  std::vector<std::size_t> layer_channels;
};

inline SdfBatch compute_sdf_batch(const ModelParams& params, const Architecture& arch,
                                  const Tensor& x, std::span<const std::size_t> tap_layers) {
  if (tap_layers.empty()) throw contract_error("compute_sdf: need at least one tap layer");
  NoGrad ng;
  std::vector<Tensor> taps;
  extract_features(params, arch, x, &taps);
  std::size_t batch = x.shape()[0];

  SdfBatch out;
  for (std::size_t t : tap_layers) {
    if (t >= taps.size()) throw contract_error("compute_sdf: tap index out of range");
    if (taps[t].shape().size() != 4)
      throw contract_error("compute_sdf: layer " + std::to_string(t) +
                           " has no spatial extent");
    out.layer_channels.push_back(taps[t].shape()[1]);
    out.dim += 2 * taps[t].shape()[1];
  }
  out.matrix.assign(batch * out.dim, 0.0);

  for (std::size_t s = 0; s < batch; ++s) {
    double* row = out.matrix.data() + s * out.dim;
    std::size_t off = 0;
    for (std::size_t t : tap_layers) {
      const Tensor& phi = taps[t];
      std::size_t C = phi.shape()[1], H = phi.shape()[2], W = phi.shape()[3];
      std::size_t hw = H * W;
      for (std::size_t c = 0; c < C; ++c) {
        const double* v = phi.value().data() + ((s * C + c) * hw);
        double mean = 0.0;
        for (std::size_t i = 0; i < hw; ++i) mean += v[i];
        mean /= double(hw);
        double var = 0.0;  // population variance, matching style-transfer convention
        for (std::size_t i = 0; i < hw; ++i) {
          double d = v[i] - mean;
          var += d * d;
        }
        var /= double(hw);
        row[off + c] = mean;
        row[off + C + c] = var;
      }
      off += 2 * C;
    }
  }
  return out;
}

inline SdfVector compute_sdf(const ModelParams& params, const Architecture& arch,
                             std::span<const double> x,
                             std::span<const std::size_t> tap_layers) {
  Tensor xb = Tensor::constant({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  SdfBatch b = compute_sdf_batch(params, arch, xb, tap_layers);
  return SdfVector{std::move(b.matrix), std::move(b.layer_channels)};
}

}  // namespace irss

#endif  // IRSS_SDF_HPP_
