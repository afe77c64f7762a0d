#ifndef IRSS_OPTIM_HPP_
#define IRSS_OPTIM_HPP_

// SGD with momentum and Adam. One Optimizer instance owns per-parameter
// state keyed by the parameter node, so stepping one group never touches
// another group's tensors.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "irss/common.hpp"
#include "irss/layers.hpp"
#include "irss/tensor.hpp"

namespace irss {

enum class OptKind { sgd_momentum, adam };

struct OptHyper {
  double lr = 1e-3;
  double momentum = 0.9;  // sgd_momentum only
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptKind kind, OptHyper hyper) : kind_(kind), hyper_(hyper) {}

  void step(std::vector<NamedParam>& group) {
    for (auto& p : group) step_one(p);
  }

  void step_one(NamedParam& p) {
    detail::Node* node = p.tensor.node();
    if (node->grad.size() != node->value.size())
      throw contract_error("optimizer: missing gradient for " + p.name);
    State& st = state_[node];
    std::size_t n = node->value.size();
    if (kind_ == OptKind::sgd_momentum) {
      if (st.m.size() != n) st.m.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        st.m[i] = hyper_.momentum * st.m[i] + node->grad[i];
        node->value[i] -= hyper_.lr * st.m[i];
      }
    } else {
      if (st.m.size() != n) {
        st.m.assign(n, 0.0);
        st.v.assign(n, 0.0);
      }
      st.t += 1;
      double bc1 = 1.0 - std::pow(hyper_.beta1, double(st.t));
      double bc2 = 1.0 - std::pow(hyper_.beta2, double(st.t));
      for (std::size_t i = 0; i < n; ++i) {
        double g = node->grad[i];
        st.m[i] = hyper_.beta1 * st.m[i] + (1.0 - hyper_.beta1) * g;
        st.v[i] = hyper_.beta2 * st.v[i] + (1.0 - hyper_.beta2) * g * g;
        node->value[i] -=
            hyper_.lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + hyper_.eps);
      }
    }
  }

  const OptHyper& hyper() const { return hyper_; }
  OptKind kind() const { return kind_; }

 private:
  struct State {
    std::vector<double> m, v;
    std::uint64_t t = 0;
  };
  OptKind kind_;
  OptHyper hyper_;
  std::unordered_map<detail::Node*, State> state_;
};

}  // namespace irss

#endif  // IRSS_OPTIM_HPP_
