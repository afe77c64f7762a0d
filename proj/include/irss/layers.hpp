#ifndef IRSS_LAYERS_HPP_
#define IRSS_LAYERS_HPP_

// Model structure: a feature extractor built from a small layer vocabulary
// (affine / relu / conv2d / 2x2 mean pool / flatten), plus single-affine
// softmax heads for the label predictor and the style discriminator.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "irss/common.hpp"
#include "irss/tensor.hpp"

namespace irss {

enum class LayerKind { affine, relu, conv2d, meanpool2, flatten };

struct LayerSpec {
  LayerKind kind;
  std::size_t out = 0;     // affine width / conv output channels
  std::size_t kernel = 0;  // conv kernel side
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::affine: return "affine";
    case LayerKind::relu: return "relu";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::meanpool2: return "meanpool2";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

struct Architecture {
  std::vector<std::size_t> input_shape;  // {D} for vectors, {C,H,W} for images
  std::vector<LayerSpec> extractor;      // empty list = identity extractor
  std::size_t classes = 2;
  std::size_t styles = 1;
  std::vector<std::size_t> sdf_taps;  // extractor layer indices with spatial output

  std::size_t input_dim() const { return shape_numel(input_shape); }
};

// Propagates per-sample shapes through the extractor, validating layer
// compatibility. Returned vector has one entry per layer (its output shape).
inline std::vector<std::vector<std::size_t>> extractor_shapes(const Architecture& arch) {
  if (arch.input_shape.size() != 1 && arch.input_shape.size() != 3)
    throw shape_error("architecture: input shape must be {D} or {C,H,W}");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur = arch.input_shape;
  for (std::size_t li = 0; li < arch.extractor.size(); ++li) {
    const LayerSpec& L = arch.extractor[li];
    std::string where = "extractor layer " + std::to_string(li) + " (" +
                        layer_kind_name(L.kind) + ")";
    switch (L.kind) {
      case LayerKind::affine:
        if (cur.size() != 1) throw shape_error(where + ": needs a flat input");
        if (L.out == 0) throw shape_error(where + ": zero width");
        cur = {L.out};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::conv2d: {
        if (cur.size() != 3) throw shape_error(where + ": needs a {C,H,W} input");
        if (L.out == 0 || L.kernel == 0) throw shape_error(where + ": bad channels/kernel");
        if (L.kernel > cur[1] || L.kernel > cur[2])
          throw shape_error(where + ": kernel larger than input");
        cur = {L.out, cur[1] - L.kernel + 1, cur[2] - L.kernel + 1};
        break;
      }
      case LayerKind::meanpool2:
        if (cur.size() != 3) throw shape_error(where + ": needs a {C,H,W} input");
        if (cur[1] % 2 != 0 || cur[2] % 2 != 0)
          throw shape_error(where + ": odd spatial extent");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::flatten:
        cur = {shape_numel(cur)};
        break;
    }
    out.push_back(cur);
  }
  return out;
}

inline std::size_t feature_dim(const Architecture& arch) {
  auto shapes = extractor_shapes(arch);
  std::vector<std::size_t> last = shapes.empty() ? arch.input_shape : shapes.back();
  if (last.size() != 1)
    throw shape_error("architecture: extractor must end in a flat feature vector");
  return last[0];
}

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct ModelParams {
  std::vector<NamedParam> theta_f;
  std::vector<NamedParam> theta_y;
  std::vector<NamedParam> theta_s;

  std::vector<NamedParam*> all() {
    std::vector<NamedParam*> v;
    for (auto* g : {&theta_f, &theta_y, &theta_s})
      for (auto& p : *g) v.push_back(&p);
    return v;
  }
};

namespace detail {

inline Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                             std::size_t fan_out, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::param(std::move(shape), std::move(v));
}

}  // namespace detail

// Affine weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
inline ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params;
  auto shapes = extractor_shapes(arch);
  std::vector<std::size_t> cur = arch.input_shape;
  for (std::size_t li = 0; li < arch.extractor.size(); ++li) {
    const LayerSpec& L = arch.extractor[li];
    std::string base = "f." + std::to_string(li);
    if (L.kind == LayerKind::affine) {
      std::size_t in = cur[0];
      params.theta_f.push_back(
          {base + ".W", detail::glorot_uniform({in, L.out}, in, L.out, rng)});
      params.theta_f.push_back(
          {base + ".b", Tensor::param({L.out}, std::vector<double>(L.out, 0.0))});
    } else if (L.kind == LayerKind::conv2d) {
      std::size_t cin = cur[0];
      std::size_t fan_in = cin * L.kernel * L.kernel;
      std::size_t fan_out = L.out * L.kernel * L.kernel;
      params.theta_f.push_back(
          {base + ".W", detail::glorot_uniform({L.out, cin, L.kernel, L.kernel},
                                               fan_in, fan_out, rng)});
      params.theta_f.push_back(
          {base + ".b", Tensor::param({L.out}, std::vector<double>(L.out, 0.0))});
    }
    cur = shapes[li];
  }
  std::size_t d = feature_dim(arch);
  params.theta_y.push_back(
      {"y.W", detail::glorot_uniform({d, arch.classes}, d, arch.classes, rng)});
  params.theta_y.push_back(
      {"y.b", Tensor::param({arch.classes}, std::vector<double>(arch.classes, 0.0))});
  params.theta_s.push_back(
      {"s.W", detail::glorot_uniform({d, arch.styles}, d, arch.styles, rng)});
  params.theta_s.push_back(
      {"s.b", Tensor::param({arch.styles}, std::vector<double>(arch.styles, 0.0))});
  return params;
}

namespace detail {

inline const Tensor& find_param(const std::vector<NamedParam>& group,
                                const std::string& name) {
  for (const auto& p : group)
    if (p.name == name) return p.tensor;
  throw contract_error("missing parameter " + name);
}

}  // namespace detail

// Runs the extractor on a (batch, D) input. When taps is non-null, stores the
// output tensor of every extractor layer (index-aligned).
inline Tensor extract_features(const ModelParams& params, const Architecture& arch,
                               const Tensor& x, std::vector<Tensor>* taps = nullptr) {
  if (x.shape().size() != 2 || x.shape()[1] != arch.input_dim())
    throw shape_error("extract_features: input is not (batch, " +
                      std::to_string(arch.input_dim()) + ")");
  if (!all_finite(x.value())) throw contract_error("extract_features: non-finite input");
  std::size_t batch = x.shape()[0];
  Tensor cur = x;
  if (arch.input_shape.size() == 3)
    cur = reshape(cur, {batch, arch.input_shape[0], arch.input_shape[1], arch.input_shape[2]});
  for (std::size_t li = 0; li < arch.extractor.size(); ++li) {
    const LayerSpec& L = arch.extractor[li];
    std::string base = "f." + std::to_string(li);
    switch (L.kind) {
      case LayerKind::affine:
        cur = add_bias(matmul(cur, detail::find_param(params.theta_f, base + ".W")),
                       detail::find_param(params.theta_f, base + ".b"));
        break;
      case LayerKind::relu:
        cur = relu(cur);
        break;
      case LayerKind::conv2d:
        cur = conv2d(cur, detail::find_param(params.theta_f, base + ".W"),
                     detail::find_param(params.theta_f, base + ".b"));
        break;
      case LayerKind::meanpool2:
        cur = mean_pool2(cur);
        break;
      case LayerKind::flatten:
        cur = reshape(cur, {batch, cur.size() / batch});
        break;
    }
    if (taps) taps->push_back(cur);
  }
  if (cur.shape().size() != 2)
    throw shape_error("extract_features: extractor did not end in a flat feature");
  return cur;
}

inline Tensor predictor_logits(const ModelParams& params, const Tensor& features) {
  return add_bias(matmul(features, detail::find_param(params.theta_y, "y.W")),
                  detail::find_param(params.theta_y, "y.b"));
}

inline Tensor discriminator_logits(const ModelParams& params, const Tensor& features) {
  return add_bias(matmul(features, detail::find_param(params.theta_s, "s.W")),
                  detail::find_param(params.theta_s, "s.b"));
}

struct ForwardResult {
  Tensor features;
  Tensor class_logits;
  Tensor class_probs;  // rows on the probability simplex
};

inline ForwardResult forward(const ModelParams& params, const Architecture& arch,
                             const Tensor& x) {
  ForwardResult r;
  r.features = extract_features(params, arch, x);
  r.class_logits = predictor_logits(params, r.features);
  r.class_probs = softmax_rows(r.class_logits);
  return r;
}

}  // namespace irss

#endif  // IRSS_LAYERS_HPP_
