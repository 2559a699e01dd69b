#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// Every op builds an explicit graph of shared_ptr-linked nodes; there is no
// global tape, so independent models can run side by side. backward() walks
// the graph reachable from a scalar root in reverse topological order,
// overwriting the previous gradients of that graph (calling it twice yields
// identical grads; accumulation happens only inside a single pass, where a
// node used by several consumers sums their contributions).
//
// Real is float for training and double for finite-difference checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "salsum/kernels.hpp"

namespace salsum {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // sized lazily by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;  // grad-requiring only
  std::function<void(TensorNode&)> backward_fn;
};

template <class Real>
class TensorT {
 public:
  TensorT() = default;

  static TensorT leaf(Shape shape, std::vector<Real> data,
                      bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<Real>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return TensorT(std::move(n));
  }

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    std::vector<Real> d(shape_numel(shape), Real(0));
    return leaf(std::move(shape), std::move(d), requires_grad);
  }

  static TensorT full(Shape shape, Real v, bool requires_grad = false) {
    std::vector<Real> d(shape_numel(shape), v);
    return leaf(std::move(shape), std::move(d), requires_grad);
  }

  static TensorT randn(Shape shape, std::mt19937_64& rng, Real stddev,
                       bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Real> d(shape_numel(shape));
    for (auto& v : d) v = static_cast<Real>(dist(rng)) * stddev;
    return leaf(std::move(shape), std::move(d), requires_grad);
  }

  static TensorT scalar(Real v, bool requires_grad = false) {
    return leaf({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[i]; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  const std::vector<Real>& value() const { return node_->value; }
  // Mutable leaf access, used by optimizers and finite differencing. The
  // graph reads values at op time, so mutate only between forward passes.
  std::vector<Real>& raw_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<Real>& grad() const {
    if (node_->grad.empty())
      throw std::runtime_error("tensor: grad not populated; run backward()");
    return node_->grad;
  }
  std::vector<Real>& raw_grad() { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  Real item() const {
    if (numel() != 1)
      throw std::invalid_argument("tensor: item() on non-scalar " +
                                  shape_str(node_->shape));
    return node_->value[0];
  }

  std::shared_ptr<TensorNode<Real>> handle() const { return node_; }
  static TensorT from_node(std::shared_ptr<TensorNode<Real>> n) {
    return TensorT(std::move(n));
  }

 private:
  explicit TensorT(std::shared_ptr<TensorNode<Real>> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode<Real>> node_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

template <class Real>
std::shared_ptr<TensorNode<Real>> make_node(Shape shape,
                                            std::vector<Real> value) {
  auto n = std::make_shared<TensorNode<Real>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

template <class Real>
void link(const std::shared_ptr<TensorNode<Real>>& out,
          std::initializer_list<std::shared_ptr<TensorNode<Real>>> inputs,
          std::function<void(TensorNode<Real>&)> fn) {
  bool rg = false;
  for (const auto& p : inputs)
    if (p->requires_grad) rg = true;
  out->requires_grad = rg;
  if (!rg) return;
  for (const auto& p : inputs)
    if (p->requires_grad) out->parents.push_back(p);
  out->backward_fn = std::move(fn);
}

template <class Real>
void ensure_finite(const std::vector<Real>& v, const char* op) {
  for (Real x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(op) + ": non-finite input");
}

}  // namespace detail

// --------------------------------------------------------------------------
// Primitive ops
// --------------------------------------------------------------------------

template <class Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n);
  kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  auto node = detail::make_node<Real>({m, n}, std::move(out));
  auto an = a.handle(), bn = b.handle();
  detail::link<Real>(node, {an, bn}, [an, bn, m, k, n](TensorNode<Real>& self) {
    if (an->requires_grad)
      kernels::gemm_nt(self.grad.data(), bn->value.data(), an->grad.data(), m,
                       n, k, true);
    if (bn->requires_grad)
      kernels::gemm_tn(an->value.data(), self.grad.data(), bn->grad.data(), k,
                       m, n, true);
  });
  return TensorT<Real>::from_node(node);
}

// a[m x k] * b[n x k]^T without materializing the transpose.
template <class Real>
TensorT<Real> matmul_nt(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<Real> out(m * n);
  kernels::gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
  auto node = detail::make_node<Real>({m, n}, std::move(out));
  auto an = a.handle(), bn = b.handle();
  detail::link<Real>(node, {an, bn}, [an, bn, m, k, n](TensorNode<Real>& self) {
    if (an->requires_grad)
      kernels::gemm_nn(self.grad.data(), bn->value.data(), an->grad.data(), m,
                       n, k, true);
    if (bn->requires_grad)
      kernels::gemm_tn(self.grad.data(), an->value.data(), bn->grad.data(), n,
                       m, k, true);
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> transpose(const TensorT<Real>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("transpose: expected rank 2, got " +
                                shape_str(x.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(m * n);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = x.value()[i * n + j];
  auto node = detail::make_node<Real>({n, m}, std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, m, n](TensorNode<Real>& self) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        xn->grad[i * n + j] += self.grad[j * m + i];
  });
  return TensorT<Real>::from_node(node);
}

namespace detail {

template <class Real>
TensorT<Real> softmax_rows_impl(const TensorT<Real>& x,
                                std::shared_ptr<std::vector<uint8_t>> mask) {
  if (x.rank() != 2)
    throw std::invalid_argument("softmax_rows: expected rank 2, got " +
                                shape_str(x.shape()));
  detail::ensure_finite(x.value(), "softmax_rows");
  const int64_t m = x.dim(0), n = x.dim(1);
  if (mask) {
    if (static_cast<int64_t>(mask->size()) != m * n)
      throw std::invalid_argument("softmax_rows: mask size mismatch");
    for (int64_t i = 0; i < m; ++i) {
      bool any = false;
      for (int64_t j = 0; j < n; ++j) any |= (*mask)[i * n + j] != 0;
      if (!any)
        throw std::invalid_argument("softmax_rows: row " + std::to_string(i) +
                                    " is fully masked");
    }
  }
  std::vector<Real> out(m * n);
  kernels::softmax_rows(x.value().data(), mask ? mask->data() : nullptr,
                        out.data(), m, n);
  auto node = detail::make_node<Real>({m, n}, std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, m, n](TensorNode<Real>& self) {
    kernels::softmax_rows_backward(self.value.data(), self.grad.data(),
                                   xn->grad.data(), m, n);
  });
  return TensorT<Real>::from_node(node);
}

}  // namespace detail

template <class Real>
TensorT<Real> softmax_rows(const TensorT<Real>& x) {
  return detail::softmax_rows_impl(x, nullptr);
}

// mask is row-major over x, nonzero = attend; masked positions come out 0.
template <class Real>
TensorT<Real> masked_softmax_rows(const TensorT<Real>& x,
                                  std::vector<uint8_t> mask) {
  return detail::softmax_rows_impl(
      x, std::make_shared<std::vector<uint8_t>>(std::move(mask)));
}

// Softmax over rows with per-column positive weights folded in before
// normalization: y_ij = exp(x_ij - mx_i) w_j / sum_k exp(x_ik - mx_i) w_k.
// This is the renormalized elementwise reweighting of the softmax rows,
// evaluated in one pass; with w identically 1 it reproduces softmax_rows
// bit for bit. Gradients flow to both x and w.
template <class Real>
TensorT<Real> weighted_softmax_rows(
    const TensorT<Real>& x, const TensorT<Real>& weights,
    std::optional<std::vector<uint8_t>> mask = std::nullopt) {
  if (x.rank() != 2)
    throw std::invalid_argument("weighted_softmax_rows: expected rank 2");
  const int64_t m = x.dim(0), n = x.dim(1);
  if (weights.numel() != n)
    throw std::invalid_argument("weighted_softmax_rows: " +
                                std::to_string(weights.numel()) +
                                " weights for " + std::to_string(n) +
                                " columns");
  detail::ensure_finite(x.value(), "weighted_softmax_rows");
  for (Real w : weights.value())
    if (!(w >= Real(0)) || !std::isfinite(w))
      throw std::invalid_argument(
          "weighted_softmax_rows: weights must be finite and nonnegative");
  std::shared_ptr<std::vector<uint8_t>> mask_ptr;
  if (mask) {
    if (static_cast<int64_t>(mask->size()) != m * n)
      throw std::invalid_argument("weighted_softmax_rows: mask size mismatch");
    mask_ptr = std::make_shared<std::vector<uint8_t>>(std::move(*mask));
  }
  std::vector<Real> out(m * n);
  kernels::weighted_softmax_rows(x.value().data(),
                                 mask_ptr ? mask_ptr->data() : nullptr,
                                 weights.value().data(), out.data(), m, n);
  for (Real v : out)
    if (!std::isfinite(v))
      throw std::domain_error(
          "weighted_softmax_rows: zero denominator (all attention mass on "
          "zero-weight positions)");
  auto node = detail::make_node<Real>({m, n}, std::move(out));
  auto xn = x.handle(), wn = weights.handle();
  detail::link<Real>(node, {xn, wn}, [xn, wn, m, n](TensorNode<Real>& self) {
    if (xn->requires_grad)
      kernels::softmax_rows_backward(self.value.data(), self.grad.data(),
                                     xn->grad.data(), m, n);
    if (wn->requires_grad) {
      for (int64_t i = 0; i < m; ++i) {
        const Real* y = self.value.data() + i * n;
        const Real* g = self.grad.data() + i * n;
        Real dot = Real(0);
        for (int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
        for (int64_t j = 0; j < n; ++j) {
          if (y[j] == Real(0)) continue;  // masked or zero-weight position
          wn->grad[j] += y[j] / wn->value[j] * (g[j] - dot);
        }
      }
    }
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> sigmoid(const TensorT<Real>& x) {
  std::vector<Real> out(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const Real v = x.value()[i];
    if (v >= Real(0)) {
      out[i] = Real(1) / (Real(1) + std::exp(-v));
    } else {
      const Real e = std::exp(v);
      out[i] = e / (Real(1) + e);
    }
  }
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn](TensorNode<Real>& self) {
    for (size_t i = 0; i < self.value.size(); ++i) {
      const Real y = self.value[i];
      xn->grad[i] += self.grad[i] * y * (Real(1) - y);
    }
  });
  return TensorT<Real>::from_node(node);
}

// Exact gaussian GELU; smooth, so finite differences behave everywhere.
template <class Real>
TensorT<Real> gelu(const TensorT<Real>& x) {
  static const Real kInvSqrt2 = Real(1) / std::sqrt(Real(2));
  static const Real kInvSqrt2Pi = Real(1) / std::sqrt(Real(2) * Real(M_PI));
  std::vector<Real> out(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const Real v = x.value()[i];
    out[i] = v * Real(0.5) * (Real(1) + std::erf(v * kInvSqrt2));
  }
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn](TensorNode<Real>& self) {
    for (size_t i = 0; i < self.value.size(); ++i) {
      const Real v = xn->value[i];
      const Real cdf = Real(0.5) * (Real(1) + std::erf(v * kInvSqrt2));
      const Real pdf = std::exp(Real(-0.5) * v * v) * kInvSqrt2Pi;
      xn->grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> layer_norm(const TensorT<Real>& x, const TensorT<Real>& gain,
                         const TensorT<Real>& bias, Real eps = Real(1e-5)) {
  if (x.rank() < 1)
    throw std::invalid_argument("layer_norm: rank-0 input");
  const int64_t d = x.dim(x.rank() - 1);
  if (gain.numel() != d || bias.numel() != d)
    throw std::invalid_argument(
        "layer_norm: gain/bias length must equal last extent " +
        std::to_string(d) + ", got " + shape_str(gain.shape()) + " and " +
        shape_str(bias.shape()));
  const int64_t rows = x.numel() / d;
  std::vector<Real> out(x.numel());
  kernels::layer_norm(x.value().data(), gain.value().data(),
                      bias.value().data(), out.data(), rows, d, eps);
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle(), gn = gain.handle(), bn = bias.handle();
  detail::link<Real>(
      node, {xn, gn, bn}, [xn, gn, bn, rows, d, eps](TensorNode<Real>& self) {
        std::vector<Real> dx_skip, dg_skip, db_skip;
        auto& dx = xn->requires_grad ? xn->grad : dx_skip;
        auto& dg = gn->requires_grad ? gn->grad : dg_skip;
        auto& db = bn->requires_grad ? bn->grad : db_skip;
        dx_skip.assign(xn->value.size(), Real(0));
        dg_skip.assign(d, Real(0));
        db_skip.assign(d, Real(0));
        kernels::layer_norm_backward(xn->value.data(), gn->value.data(),
                                     self.grad.data(), dx.data(), dg.data(),
                                     db.data(), rows, d, eps);
      });
  return TensorT<Real>::from_node(node);
}

// Row gather; backward scatter-adds, so a repeated id accumulates.
template <class Real>
TensorT<Real> embed(const std::vector<int>& ids, const TensorT<Real>& table) {
  if (table.rank() != 2)
    throw std::invalid_argument("embed: table must be rank 2");
  const int64_t v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embed: id " + std::to_string(id) +
                                  " out of range for table " +
                                  shape_str(table.shape()));
  const int64_t len = static_cast<int64_t>(ids.size());
  std::vector<Real> out(len * d);
  for (int64_t t = 0; t < len; ++t)
    std::copy_n(table.value().data() + int64_t(ids[t]) * d, d,
                out.data() + t * d);
  auto node = detail::make_node<Real>({len, d}, std::move(out));
  auto tn = table.handle();
  detail::link<Real>(node, {tn}, [tn, ids, d](TensorNode<Real>& self) {
    for (size_t t = 0; t < ids.size(); ++t) {
      Real* dst = tn->grad.data() + int64_t(ids[t]) * d;
      const Real* src = self.grad.data() + int64_t(t) * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
  return TensorT<Real>::from_node(node);
}

// Mean over rows of -log softmax(logits)[target], fused for stability.
template <class Real>
TensorT<Real> cross_entropy(const TensorT<Real>& logits,
                            const std::vector<int>& targets) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be rank 2");
  const int64_t t_steps = logits.dim(0), v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != t_steps)
    throw std::invalid_argument(
        "cross_entropy: " + std::to_string(targets.size()) +
        " targets for " + std::to_string(t_steps) + " rows");
  for (int y : targets)
    if (y < 0 || y >= v)
      throw std::invalid_argument("cross_entropy: target " +
                                  std::to_string(y) + " outside vocab of " +
                                  std::to_string(v));
  auto probs = std::make_shared<std::vector<Real>>(t_steps * v);
  Real loss = Real(0);
  for (int64_t t = 0; t < t_steps; ++t) {
    const Real* row = logits.value().data() + t * v;
    Real mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real denom = Real(0);
    for (int64_t j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
    const Real lse = mx + std::log(denom);
    loss += lse - row[targets[t]];
    Real* p = probs->data() + t * v;
    for (int64_t j = 0; j < v; ++j) p[j] = std::exp(row[j] - lse);
  }
  loss /= Real(t_steps);
  auto node = detail::make_node<Real>({1}, {loss});
  auto ln = logits.handle();
  detail::link<Real>(
      node, {ln}, [ln, probs, targets, t_steps, v](TensorNode<Real>& self) {
        const Real g = self.grad[0] / Real(t_steps);
        for (int64_t t = 0; t < t_steps; ++t) {
          const Real* p = probs->data() + t * v;
          Real* d = ln->grad.data() + t * v;
          for (int64_t j = 0; j < v; ++j) d[j] += g * p[j];
          d[targets[t]] -= g;
        }
      });
  return TensorT<Real>::from_node(node);
}

// Mean binary cross entropy; scores clamped to [1e-7, 1-1e-7] before the
// logs, with zero gradient outside the clamp window.
template <class Real>
TensorT<Real> binary_cross_entropy(const TensorT<Real>& scores,
                                   const std::vector<int>& labels) {
  if (scores.numel() != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument(
        "binary_cross_entropy: " + std::to_string(scores.numel()) +
        " scores vs " + std::to_string(labels.size()) + " labels");
  const int64_t len = scores.numel();
  if (len == 0)
    throw std::invalid_argument("binary_cross_entropy: empty input");
  const Real lo = Real(1e-7), hi = Real(1) - Real(1e-7);
  Real loss = Real(0);
  for (int64_t i = 0; i < len; ++i) {
    const Real s = std::clamp(scores.value()[i], lo, hi);
    loss -= labels[i] ? std::log(s) : std::log(Real(1) - s);
  }
  loss /= Real(len);
  auto node = detail::make_node<Real>({1}, {loss});
  auto sn = scores.handle();
  detail::link<Real>(
      node, {sn}, [sn, labels, len, lo, hi](TensorNode<Real>& self) {
        const Real g = self.grad[0] / Real(len);
        for (int64_t i = 0; i < len; ++i) {
          const Real s = sn->value[i];
          if (s <= lo || s >= hi) continue;
          sn->grad[i] += labels[i] ? -g / s : g / (Real(1) - s);
        }
      });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  std::vector<Real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i)
    out[i] = a.value()[i] + b.value()[i];
  auto node = detail::make_node<Real>(a.shape(), std::move(out));
  auto an = a.handle(), bn = b.handle();
  detail::link<Real>(node, {an, bn}, [an, bn](TensorNode<Real>& self) {
    if (an->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    if (bn->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  std::vector<Real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  auto node = detail::make_node<Real>(a.shape(), std::move(out));
  auto an = a.handle(), bn = b.handle();
  detail::link<Real>(node, {an, bn}, [an, bn](TensorNode<Real>& self) {
    if (an->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i)
        an->grad[i] += self.grad[i] * bn->value[i];
    if (bn->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i)
        bn->grad[i] += self.grad[i] * an->value[i];
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> scale(const TensorT<Real>& x, Real c) {
  std::vector<Real> out(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x.value()[i] * c;
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, c](TensorNode<Real>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += self.grad[i] * c;
  });
  return TensorT<Real>::from_node(node);
}

// x[m x n] + b[n] broadcast across rows.
template <class Real>
TensorT<Real> add_rowvec(const TensorT<Real>& x, const TensorT<Real>& b) {
  if (x.rank() != 2 || b.numel() != x.dim(1))
    throw std::invalid_argument("add_rowvec: " + shape_str(x.shape()) +
                                " vs " + shape_str(b.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(m * n);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[i * n + j] = x.value()[i * n + j] + b.value()[j];
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle(), bn = b.handle();
  detail::link<Real>(node, {xn, bn}, [xn, bn, m, n](TensorNode<Real>& self) {
    if (xn->requires_grad)
      for (int64_t i = 0; i < m * n; ++i) xn->grad[i] += self.grad[i];
    if (bn->requires_grad)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) bn->grad[j] += self.grad[i * n + j];
  });
  return TensorT<Real>::from_node(node);
}

// x + b with b a 1-element tensor broadcast over everything.
template <class Real>
TensorT<Real> add_scalar(const TensorT<Real>& x, const TensorT<Real>& b) {
  if (b.numel() != 1)
    throw std::invalid_argument("add_scalar: bias must have one element");
  std::vector<Real> out(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x.value()[i] + b.value()[0];
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle(), bn = b.handle();
  detail::link<Real>(node, {xn, bn}, [xn, bn](TensorNode<Real>& self) {
    if (xn->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    if (bn->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[0] += self.grad[i];
  });
  return TensorT<Real>::from_node(node);
}

// Scale row i of x[m x n] by s[i].
template <class Real>
TensorT<Real> mul_rowwise(const TensorT<Real>& x, const TensorT<Real>& s) {
  if (x.rank() != 2 || s.numel() != x.dim(0))
    throw std::invalid_argument("mul_rowwise: " + shape_str(x.shape()) +
                                " vs " + shape_str(s.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(m * n);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[i * n + j] = x.value()[i * n + j] * s.value()[i];
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle(), sn = s.handle();
  detail::link<Real>(node, {xn, sn}, [xn, sn, m, n](TensorNode<Real>& self) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        if (xn->requires_grad)
          xn->grad[i * n + j] += self.grad[i * n + j] * sn->value[i];
        if (sn->requires_grad)
          sn->grad[i] += self.grad[i * n + j] * xn->value[i * n + j];
      }
  });
  return TensorT<Real>::from_node(node);
}

// Scale column j of x[m x n] by s[j].
template <class Real>
TensorT<Real> mul_colwise(const TensorT<Real>& x, const TensorT<Real>& s) {
  if (x.rank() != 2 || s.numel() != x.dim(1))
    throw std::invalid_argument("mul_colwise: " + shape_str(x.shape()) +
                                " vs " + shape_str(s.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  std::vector<Real> out(m * n);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[i * n + j] = x.value()[i * n + j] * s.value()[j];
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle(), sn = s.handle();
  detail::link<Real>(node, {xn, sn}, [xn, sn, m, n](TensorNode<Real>& self) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        if (xn->requires_grad)
          xn->grad[i * n + j] += self.grad[i * n + j] * sn->value[j];
        if (sn->requires_grad)
          sn->grad[j] += self.grad[i * n + j] * xn->value[i * n + j];
      }
  });
  return TensorT<Real>::from_node(node);
}

// Divide each row by its sum. Errors when a row sums to (numerically) zero.
template <class Real>
TensorT<Real> rows_renormalize(const TensorT<Real>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("rows_renormalize: expected rank 2");
  const int64_t m = x.dim(0), n = x.dim(1);
  auto sums = std::make_shared<std::vector<Real>>(m);
  std::vector<Real> out(m * n);
  for (int64_t i = 0; i < m; ++i) {
    Real s = Real(0);
    for (int64_t j = 0; j < n; ++j) s += x.value()[i * n + j];
    if (!(std::abs(s) > std::numeric_limits<Real>::min()))
      throw std::domain_error("rows_renormalize: row " + std::to_string(i) +
                              " sums to zero");
    (*sums)[i] = s;
    for (int64_t j = 0; j < n; ++j) out[i * n + j] = x.value()[i * n + j] / s;
  }
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, sums, m, n](TensorNode<Real>& self) {
    for (int64_t i = 0; i < m; ++i) {
      Real dot = Real(0);
      for (int64_t j = 0; j < n; ++j)
        dot += self.grad[i * n + j] * self.value[i * n + j];
      const Real inv = Real(1) / (*sums)[i];
      for (int64_t j = 0; j < n; ++j)
        xn->grad[i * n + j] += (self.grad[i * n + j] - dot) * inv;
    }
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> slice_cols(const TensorT<Real>& x, int64_t c0, int64_t c1) {
  if (x.rank() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) +
                                ", " + std::to_string(c1) + ") for " +
                                shape_str(x.shape()));
  const int64_t m = x.dim(0), n = x.dim(1), w = c1 - c0;
  std::vector<Real> out(m * w);
  for (int64_t i = 0; i < m; ++i)
    std::copy_n(x.value().data() + i * n + c0, w, out.data() + i * w);
  auto node = detail::make_node<Real>({m, w}, std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, m, n, c0, w](TensorNode<Real>& self) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j)
        xn->grad[i * n + c0 + j] += self.grad[i * w + j];
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> slice_rows(const TensorT<Real>& x, int64_t r0, int64_t r1) {
  if (x.rank() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) +
                                ", " + std::to_string(r1) + ") for " +
                                shape_str(x.shape()));
  const int64_t n = x.dim(1), h = r1 - r0;
  std::vector<Real> out(h * n);
  std::copy_n(x.value().data() + r0 * n, h * n, out.data());
  auto node = detail::make_node<Real>({h, n}, std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, r0, n, h](TensorNode<Real>& self) {
    for (int64_t i = 0; i < h * n; ++i) xn->grad[r0 * n + i] += self.grad[i];
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> concat_cols(const std::vector<TensorT<Real>>& parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_cols: no inputs");
  const int64_t m = parts[0].dim(0);
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m)
      throw std::invalid_argument("concat_cols: row mismatch");
    total += p.dim(1);
  }
  std::vector<Real> out(m * total);
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t w = p.dim(1);
    for (int64_t i = 0; i < m; ++i)
      std::copy_n(p.value().data() + i * w, w, out.data() + i * total + off);
    off += w;
  }
  auto node = detail::make_node<Real>({m, total}, std::move(out));
  std::vector<std::shared_ptr<TensorNode<Real>>> handles;
  bool rg = false;
  for (const auto& p : parts) {
    handles.push_back(p.handle());
    rg |= p.requires_grad();
  }
  node->requires_grad = rg;
  if (rg) {
    for (const auto& h : handles)
      if (h->requires_grad) node->parents.push_back(h);
    node->backward_fn = [handles, m, total](TensorNode<Real>& self) {
      int64_t off = 0;
      for (const auto& h : handles) {
        const int64_t w = h->shape[1];
        if (h->requires_grad)
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j)
              h->grad[i * w + j] += self.grad[i * total + off + j];
        off += w;
      }
    };
  }
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> reshape(const TensorT<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(x.shape()) + " as " +
                                shape_str(shape));
  auto node = detail::make_node<Real>(std::move(shape), x.value());
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn](TensorNode<Real>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> sum_all(const TensorT<Real>& x) {
  Real s = Real(0);
  for (Real v : x.value()) s += v;
  auto node = detail::make_node<Real>({1}, {s});
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn](TensorNode<Real>& self) {
    for (auto& g : xn->grad) g += self.grad[0];
  });
  return TensorT<Real>::from_node(node);
}

template <class Real>
TensorT<Real> mean_all(const TensorT<Real>& x) {
  return scale(sum_all(x), Real(1) / Real(x.numel()));
}

// Arithmetic mean of scalar tensors (batch loss aggregation).
template <class Real>
TensorT<Real> average(const std::vector<TensorT<Real>>& scalars) {
  if (scalars.empty())
    throw std::invalid_argument("average: empty batch");
  Real s = Real(0);
  for (const auto& t : scalars) {
    if (t.numel() != 1)
      throw std::invalid_argument("average: non-scalar input");
    s += t.item();
  }
  const int64_t n = static_cast<int64_t>(scalars.size());
  auto node = detail::make_node<Real>({1}, {s / Real(n)});
  std::vector<std::shared_ptr<TensorNode<Real>>> handles;
  bool rg = false;
  for (const auto& t : scalars) {
    handles.push_back(t.handle());
    rg |= t.requires_grad();
  }
  node->requires_grad = rg;
  if (rg) {
    for (const auto& h : handles)
      if (h->requires_grad) node->parents.push_back(h);
    node->backward_fn = [handles, n](TensorNode<Real>& self) {
      for (const auto& h : handles)
        if (h->requires_grad) h->grad[0] += self.grad[0] / Real(n);
    };
  }
  return TensorT<Real>::from_node(node);
}

// Inverted dropout with a caller-supplied generator; identity when rate is 0.
template <class Real>
TensorT<Real> dropout(const TensorT<Real>& x, double rate,
                      std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  auto mask = std::make_shared<std::vector<Real>>(x.numel());
  const Real inv = Real(1.0 / (1.0 - rate));
  std::vector<Real> out(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) {
    (*mask)[i] = keep(rng) ? inv : Real(0);
    out[i] = x.value()[i] * (*mask)[i];
  }
  auto node = detail::make_node<Real>(x.shape(), std::move(out));
  auto xn = x.handle();
  detail::link<Real>(node, {xn}, [xn, mask](TensorNode<Real>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += self.grad[i] * (*mask)[i];
  });
  return TensorT<Real>::from_node(node);
}

// --------------------------------------------------------------------------
// Reverse pass
// --------------------------------------------------------------------------

template <class Real>
void backward(const TensorT<Real>& root) {
  if (root.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_str(root.shape()));
  // Iterative post-order DFS for the topological order.
  std::vector<TensorNode<Real>*> order;
  std::unordered_set<TensorNode<Real>*> seen;
  struct Frame {
    TensorNode<Real>* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  if (seen.insert(root.handle().get()).second)
    stack.push_back({root.handle().get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->parents.size()) {
      TensorNode<Real>* child = f.node->parents[f.next_child++].get();
      if (seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  for (TensorNode<Real>* n : order) n->grad.assign(n->value.size(), Real(0));
  root.handle()->grad[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// --------------------------------------------------------------------------
// Central finite-difference gradient checking. f rebuilds its graph from the
// current leaf values on every call; inputs are perturbed in place. When
// max_coords_per_input > 0, a seeded sample of coordinates per input is
// checked instead of all of them.
// --------------------------------------------------------------------------

template <class Real>
Real grad_check(const std::function<TensorT<Real>()>& f,
                std::vector<TensorT<Real>> inputs, Real h,
                int64_t max_coords_per_input = 0) {
  TensorT<Real> out = f();
  backward(out);
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  Real worst = Real(0);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const int64_t n = inputs[i].numel();
    std::vector<int64_t> coords;
    if (max_coords_per_input > 0 && n > max_coords_per_input) {
      std::mt19937_64 rng(0x5A17C0DEull + i);
      std::unordered_set<int64_t> picked;
      while (static_cast<int64_t>(picked.size()) < max_coords_per_input)
        picked.insert(std::uniform_int_distribution<int64_t>(0, n - 1)(rng));
      coords.assign(picked.begin(), picked.end());
      std::sort(coords.begin(), coords.end());
    } else {
      coords.resize(n);
      for (int64_t c = 0; c < n; ++c) coords[c] = c;
    }
    for (int64_t c : coords) {
      auto& vals = inputs[i].raw_value();
      const Real orig = vals[c];
      vals[c] = orig + h;
      const Real f_plus = f().item();
      vals[c] = orig - h;
      const Real f_minus = f().item();
      vals[c] = orig;
      const Real numeric = (f_plus - f_minus) / (Real(2) * h);
      const Real a = analytic[i][c];
      const Real rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), Real(1e-8)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace salsum
