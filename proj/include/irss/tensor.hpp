#ifndef IRSS_TENSOR_HPP_
#define IRSS_TENSOR_HPP_

// Dense f64 tensors with tape-based reverse-mode differentiation. The graph
// is rebuilt on every forward pass; backward() walks it once in reverse
// creation order. Single-threaded within one graph; node ids come from an
// atomic counter so whole models can be moved between threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "irss/common.hpp"

namespace irss {

namespace detail {

struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
};

inline std::atomic<std::uint64_t> node_counter{1};

inline thread_local int no_grad_depth = 0;

inline void ensure_grad(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

}  // namespace detail

// RAII switch that disables tape recording (used for sdf, clustering inputs
// and evaluation forwards).
struct NoGrad {
  NoGrad() { ++detail::no_grad_depth; }
  ~NoGrad() { --detail::no_grad_depth; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(std::vector<std::size_t> shape, std::vector<double> value) {
    check_sizes(shape, value);
    return Tensor(make_node(std::move(shape), std::move(value), false));
  }
  static Tensor scalar(double v) { return constant({1}, {v}); }
  // Leaf with gradient tracking (model parameter).
  static Tensor param(std::vector<std::size_t> shape, std::vector<double> value) {
    check_sizes(shape, value);
    return Tensor(make_node(std::move(shape), std::move(value), true));
  }
  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), false));
  }

  bool defined() const { return n_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::span<const double> value() const { return n_->value; }
  std::span<double> mutable_value() { return n_->value; }
  std::span<const double> grad() const { return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  double item() const {
    if (size() != 1) throw contract_error("item(): tensor is not a scalar");
    return n_->value[0];
  }
  double grad_at(std::size_t i) const { return n_->grad.empty() ? 0.0 : n_->grad[i]; }

  Tensor detach() const { return constant(n_->shape, n_->value); }

  detail::Node* node() const { return n_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return n_; }

  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

 private:
  static void check_sizes(const std::vector<std::size_t>& shape,
                          const std::vector<double>& value) {
    for (std::size_t d : shape)
      if (d == 0) throw shape_error("tensor: zero dimension");
    if (shape_numel(shape) != value.size())
      throw shape_error("tensor: value size does not match shape");
  }
  static std::shared_ptr<detail::Node> make_node(std::vector<std::size_t> shape,
                                                 std::vector<double> value,
                                                 bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_enabled();
    n->id = detail::node_counter.fetch_add(1, std::memory_order_relaxed);
    return n;
  }

  std::shared_ptr<detail::Node> n_;
};

namespace detail {

inline Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
                      std::vector<Tensor> parents,
                      std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->id = node_counter.fetch_add(1, std::memory_order_relaxed);
  bool track = false;
  if (no_grad_depth == 0) {
    for (const Tensor& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

}  // namespace detail

// ---- elementwise / linear ops ----

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(op) + ": shape mismatch");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *n.parents[p];
      if (!par.requires_grad) continue;
      detail::ensure_grad(par);
      for (std::size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      detail::ensure_grad(pa);
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      detail::ensure_grad(pb);
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      detail::ensure_grad(pa);
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      detail::ensure_grad(pb);
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * a.value()[i];
  return detail::make_op(a.shape(), std::move(v), {a}, [c](detail::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    detail::ensure_grad(pa);
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += c * n.grad[i];
  });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor square(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * a.value()[i];
  return detail::make_op(a.shape(), std::move(v), {a}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    detail::ensure_grad(pa);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa.grad[i] += 2.0 * pa.value[i] * n.grad[i];
  });
}

// x: (m, n), bias: (n); adds bias to every row.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.shape().size() != 2 || bias.shape().size() != 1 || x.shape()[1] != bias.shape()[0])
    throw shape_error("add_bias: expected (m,n) + (n)");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] = x.value()[i * n + j] + bias.value()[j];
  return detail::make_op(x.shape(), std::move(v), {x, bias}, [m, n](detail::Node& nd) {
    auto& px = *nd.parents[0];
    auto& pb = *nd.parents[1];
    if (px.requires_grad) {
      detail::ensure_grad(px);
      for (std::size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i];
    }
    if (pb.requires_grad) {
      detail::ensure_grad(pb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pb.grad[j] += nd.grad[i * n + j];
    }
  });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw shape_error("matmul: inner dimensions do not match");
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> v(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = a.value()[i * k + p];
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] += av * b.value()[p * n + j];
    }
  return detail::make_op({m, n}, std::move(v), {a, b}, [m, k, n](detail::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    if (pa.requires_grad) {
      detail::ensure_grad(pa);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double g = nd.grad[i * n + j];
          for (std::size_t p = 0; p < k; ++p) pa.grad[i * k + p] += g * pb.value[p * n + j];
        }
    }
    if (pb.requires_grad) {
      detail::ensure_grad(pb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double av = pa.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) pb.grad[p * n + j] += av * nd.grad[i * n + j];
        }
    }
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  return detail::make_op(x.shape(), std::move(v), {x}, [](detail::Node& n) {
    auto& px = *n.parents[0];
    if (!px.requires_grad) return;
    detail::ensure_grad(px);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (px.value[i] > 0.0) px.grad[i] += n.grad[i];
  });
}

// Row-wise stable softmax over the last dimension of a (m, n) tensor.
inline Tensor softmax_rows(const Tensor& x) {
  if (x.shape().size() != 2) throw shape_error("softmax_rows: expected rank-2 input");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.value().data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      v[i * n + j] = std::exp(row[j] - mx);
      sum += v[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= sum;
  }
  return detail::make_op(x.shape(), std::move(v), {x}, [m, n](detail::Node& nd) {
    auto& px = *nd.parents[0];
    if (!px.requires_grad) return;
    detail::ensure_grad(px);
    for (std::size_t i = 0; i < m; ++i) {
      const double* p = nd.value.data() + i * n;
      const double* g = nd.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * p[j];
      for (std::size_t j = 0; j < n; ++j) px.grad[i * n + j] += p[j] * (g[j] - dot);
    }
  });
}

// log(max(x, eps)); the clamp region propagates zero gradient.
inline Tensor log_clamped(const Tensor& x, double eps = 1e-12) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(std::max(x.value()[i], eps));
  return detail::make_op(x.shape(), std::move(v), {x}, [eps](detail::Node& n) {
    auto& px = *n.parents[0];
    if (!px.requires_grad) return;
    detail::ensure_grad(px);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (px.value[i] > eps) px.grad[i] += n.grad[i] / px.value[i];
  });
}

// y_i = x[i, idx[i]] for a (m, n) input.
inline Tensor pick_per_row(const Tensor& x, std::vector<std::size_t> idx) {
  if (x.shape().size() != 2) throw shape_error("pick_per_row: expected rank-2 input");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  if (idx.size() != m) throw shape_error("pick_per_row: index count != rows");
  for (std::size_t i : idx)
    if (i >= n) throw contract_error("pick_per_row: column index out of range");
  std::vector<double> v(m);
  for (std::size_t i = 0; i < m; ++i) v[i] = x.value()[i * n + idx[i]];
  return detail::make_op({m}, std::move(v), {x},
                         [n, idx = std::move(idx)](detail::Node& nd) {
                           auto& px = *nd.parents[0];
                           if (!px.requires_grad) return;
                           detail::ensure_grad(px);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             px.grad[i * n + idx[i]] += nd.grad[i];
                         });
}

// Row subset of a (m, n) tensor; backward scatter-adds.
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> rows) {
  if (x.shape().size() != 2) throw shape_error("gather_rows: expected rank-2 input");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  for (std::size_t r : rows)
    if (r >= m) throw contract_error("gather_rows: row index out of range");
  std::size_t r = rows.size();
  std::vector<double> v(r * n);
  for (std::size_t t = 0; t < r; ++t)
    std::copy_n(x.value().data() + rows[t] * n, n, v.data() + t * n);
  return detail::make_op({r, n}, std::move(v), {x},
                         [n, rows = std::move(rows)](detail::Node& nd) {
                           auto& px = *nd.parents[0];
                           if (!px.requires_grad) return;
                           detail::ensure_grad(px);
                           for (std::size_t t = 0; t < rows.size(); ++t)
                             for (std::size_t j = 0; j < n; ++j)
                               px.grad[rows[t] * n + j] += nd.grad[t * n + j];
                         });
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  return detail::make_op({1}, {s}, {x}, [](detail::Node& n) {
    auto& px = *n.parents[0];
    if (!px.requires_grad) return;
    detail::ensure_grad(px);
    for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += n.grad[0];
  });
}

inline Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / double(x.size())); }

inline Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != x.size()) throw shape_error("reshape: element count mismatch");
  std::vector<double> v(x.value().begin(), x.value().end());
  return detail::make_op(std::move(shape), std::move(v), {x}, [](detail::Node& n) {
    auto& px = *n.parents[0];
    if (!px.requires_grad) return;
    detail::ensure_grad(px);
    for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
  });
}

// Identity forward; backward multiplies the upstream gradient by -lambda.
inline Tensor grad_reverse(const Tensor& x, double lambda) {
  if (lambda < 0.0) throw config_error("grad_reverse: lambda must be >= 0");
  std::vector<double> v(x.value().begin(), x.value().end());
  return detail::make_op(x.shape(), std::move(v), {x}, [lambda](detail::Node& n) {
    auto& px = *n.parents[0];
    if (!px.requires_grad) return;
    detail::ensure_grad(px);
    for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] -= lambda * n.grad[i];
  });
}

// Valid (no padding) stride-1 convolution. x: (b, Cin, H, W),
// w: (Cout, Cin, kh, kw), bias: (Cout) -> (b, Cout, H-kh+1, W-kw+1).
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw shape_error("conv2d: expected rank-4 input and kernel");
  std::size_t b = x.shape()[0], cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  std::size_t cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[1] != cin) throw shape_error("conv2d: channel mismatch");
  if (bias.shape() != std::vector<std::size_t>{cout}) throw shape_error("conv2d: bad bias");
  if (kh > H || kw > W) throw shape_error("conv2d: kernel larger than input");
  std::size_t oh = H - kh + 1, ow = W - kw + 1;
  std::vector<double> v(b * cout * oh * ow);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.value()[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t u = 0; u < kh; ++u) {
              const double* xrow = xv + ((s * cin + ci) * H + i + u) * W + j;
              const double* wrow = wv + ((co * cin + ci) * kh + u) * kw;
              for (std::size_t t = 0; t < kw; ++t) acc += xrow[t] * wrow[t];
            }
          v[((s * cout + co) * oh + i) * ow + j] = acc;
        }
  return detail::make_op(
      {b, cout, oh, ow}, std::move(v), {x, w, bias},
      [b, cin, H, W, cout, kh, kw, oh, ow](detail::Node& nd) {
        auto& px = *nd.parents[0];
        auto& pw = *nd.parents[1];
        auto& pb = *nd.parents[2];
        if (px.requires_grad) detail::ensure_grad(px);
        if (pw.requires_grad) detail::ensure_grad(pw);
        if (pb.requires_grad) detail::ensure_grad(pb);
        for (std::size_t s = 0; s < b; ++s)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                double g = nd.grad[((s * cout + co) * oh + i) * ow + j];
                if (g == 0.0) continue;
                if (pb.requires_grad) pb.grad[co] += g;
                for (std::size_t ci = 0; ci < cin; ++ci)
                  for (std::size_t u = 0; u < kh; ++u)
                    for (std::size_t t = 0; t < kw; ++t) {
                      std::size_t xi = ((s * cin + ci) * H + i + u) * W + j + t;
                      std::size_t wi = ((co * cin + ci) * kh + u) * kw + t;
                      if (px.requires_grad) px.grad[xi] += g * pw.value[wi];
                      if (pw.requires_grad) pw.grad[wi] += g * px.value[xi];
                    }
              }
      });
}

// 2x2 mean pooling, stride 2; spatial dims must be even.
inline Tensor mean_pool2(const Tensor& x) {
  if (x.shape().size() != 4) throw shape_error("mean_pool2: expected rank-4 input");
  std::size_t b = x.shape()[0], c = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H % 2 != 0 || W % 2 != 0) throw shape_error("mean_pool2: odd spatial extent");
  std::size_t oh = H / 2, ow = W / 2;
  std::vector<double> v(b * c * oh * ow);
  for (std::size_t s = 0; s < b * c; ++s)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double* base = x.value().data() + (s * H + 2 * i) * W + 2 * j;
        v[(s * oh + i) * ow + j] = 0.25 * (base[0] + base[1] + base[W] + base[W + 1]);
      }
  return detail::make_op({b, c, oh, ow}, std::move(v), {x},
                         [b, c, H, W, oh, ow](detail::Node& nd) {
                           auto& px = *nd.parents[0];
                           if (!px.requires_grad) return;
                           detail::ensure_grad(px);
                           for (std::size_t s = 0; s < b * c; ++s)
                             for (std::size_t i = 0; i < oh; ++i)
                               for (std::size_t j = 0; j < ow; ++j) {
                                 double g = 0.25 * nd.grad[(s * oh + i) * ow + j];
                                 double* base = px.grad.data() + (s * H + 2 * i) * W + 2 * j;
                                 base[0] += g;
                                 base[1] += g;
                                 base[W] += g;
                                 base[W + 1] += g;
                               }
                         });
}

// Reverse-mode sweep from a scalar loss. Grads of every reachable node are
// overwritten; unreachable leaves keep whatever they held before.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw contract_error("backward: loss must be a defined scalar");
  detail::Node* root = loss.node();
  if (!root->requires_grad) return;  // constant loss: nothing depends on leaves

  // Creation ids give a topological order (ops are created after their inputs).
  std::vector<detail::Node*> reachable;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    reachable.push_back(n);
    for (auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(reachable.begin(), reachable.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });
  for (detail::Node* n : reachable) n->grad.assign(n->value.size(), 0.0);
  root->grad[0] = 1.0;
  for (detail::Node* n : reachable)
    if (n->backprop) n->backprop(*n);
}

}  // namespace irss

#endif  // IRSS_TENSOR_HPP_
