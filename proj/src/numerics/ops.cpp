// SPDX-License-Identifier: Apache-2.0

#include "dsdet/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsdet/kernels/kernels.hpp"

namespace dsdet::numerics {

using detail::Node;
using kernels::Trans;

Activation activation_from_string(const std::string& name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
  }
  return "gelu";
}

namespace {

template <typename T>
void require_2d(const Tensor<T>& t, const char* op) {
  if (t.ndim() != 2) throw DimensionError(std::string(op) + ": expected 2-D tensor, got " + shape_string(t.shape()));
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename T>
Node<T>* grad_target(Node<T>& self, std::size_t i) {
  Node<T>* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

// y = f(x); dx += g * df(x, y)
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D df) {
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [df](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * df(px->value[i], self.value[i]);
  });
}

// y = f(a, b); da += g * dfa(a, b), db += g * dfb(a, b)
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA dfa, DB dfb) {
  require_same(a, b, name);
  std::vector<T> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result<T>(a.shape(), std::move(out), {a, b}, [dfa, dfb](Node<T>& self) {
    Node<T>* pa = grad_target(self, 0);
    Node<T>* pb = grad_target(self, 1);
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa) pa->grad[i] += self.grad[i] * dfa(A[i], B[i]);
      if (pb) pb->grad[i] += self.grad[i] * dfb(A[i], B[i]);
    }
  });
}

template <typename T>
T stable_softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T logistic(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  const auto& kt = kernels::active<T>();
  kt.gemm(Trans::kNo, Trans::kNo, m, n, k, a.values().data(), k, b.values().data(), n, out.data(), n, false);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    const auto& kt = kernels::active<T>();
    Node<T>* pa = grad_target(self, 0);
    Node<T>* pb = grad_target(self, 1);
    if (pa)
      kt.gemm(Trans::kNo, Trans::kYes, m, k, n, self.grad.data(), n, self.parents[1]->value.data(), n,
              pa->grad.data(), k, true);
    if (pb)
      kt.gemm(Trans::kYes, Trans::kNo, k, n, m, self.parents[0]->value.data(), k, self.grad.data(), n,
              pb->grad.data(), n, true);
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  const auto& kt = kernels::active<T>();
  kt.gemm(Trans::kNo, Trans::kYes, m, n, k, a.values().data(), k, b.values().data(), k, out.data(), n, false);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    const auto& kt = kernels::active<T>();
    Node<T>* pa = grad_target(self, 0);
    Node<T>* pb = grad_target(self, 1);
    if (pa)
      kt.gemm(Trans::kNo, Trans::kNo, m, k, n, self.grad.data(), n, self.parents[1]->value.data(), k,
              pa->grad.data(), k, true);
    if (pb)
      kt.gemm(Trans::kYes, Trans::kNo, n, k, m, self.grad.data(), n, self.parents[0]->value.data(), k,
              pb->grad.data(), k, true);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  const int n = x.rows(), in = x.cols(), out_dim = w.cols();
  if (w.rows() != in)
    throw DimensionError("linear: input width " + std::to_string(in) + " vs weight " + shape_string(w.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && static_cast<int>(bias.size()) != out_dim)
    throw DimensionError("linear: bias length " + std::to_string(bias.size()) + " vs " + std::to_string(out_dim));
  std::vector<T> out(static_cast<std::size_t>(n) * out_dim);
  if (has_bias) {
    const auto bv = bias.values();
    for (int r = 0; r < n; ++r) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(r) * out_dim);
  }
  const auto& kt = kernels::active<T>();
  kt.gemm(Trans::kNo, Trans::kNo, n, out_dim, in, x.values().data(), in, w.values().data(), out_dim, out.data(),
          out_dim, has_bias);
  std::vector<Tensor<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>({n, out_dim}, std::move(out), std::move(inputs), [n, in, out_dim, has_bias](Node<T>& self) {
    const auto& kt = kernels::active<T>();
    Node<T>* px = grad_target(self, 0);
    Node<T>* pw = grad_target(self, 1);
    if (px)
      kt.gemm(Trans::kNo, Trans::kYes, n, in, out_dim, self.grad.data(), out_dim, self.parents[1]->value.data(),
              out_dim, px->grad.data(), in, true);
    if (pw)
      kt.gemm(Trans::kYes, Trans::kNo, in, out_dim, n, self.parents[0]->value.data(), in, self.grad.data(), out_dim,
              pw->grad.data(), out_dim, true);
    if (has_bias) {
      if (Node<T>* pb = grad_target(self, 2)) {
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < out_dim; ++c) pb->grad[c] += self.grad[static_cast<std::size_t>(r) * out_dim + c];
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "maximum", [](T x, T y) { return x >= y ? x : y; }, [](T x, T y) { return x >= y ? T(1) : T(0); },
      [](T x, T y) { return x >= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "minimum", [](T x, T y) { return x <= y ? x : y; }, [](T x, T y) { return x <= y ? T(1) : T(0); },
      [](T x, T y) { return x <= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
  require_2d(x, "add_row");
  const int r = x.rows(), c = x.cols();
  if (static_cast<int>(row.size()) != c)
    throw DimensionError("add_row: row length " + std::to_string(row.size()) + " vs " + std::to_string(c));
  std::vector<T> out(x.values().begin(), x.values().end());
  const auto rv = row.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] += rv[j];
  return make_result<T>(x.shape(), std::move(out), {x, row}, [r, c](Node<T>& self) {
    if (Node<T>* px = grad_target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
    if (Node<T>* pr = grad_target(self, 1))
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) pr->grad[j] += self.grad[static_cast<std::size_t>(i) * c + j];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v < lo || v > hi) ? T(0) : T(1); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, [](T v) { return logistic(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v))); },
      [](T v, T) {
        const T u = kC * (v + kA * v * v * v);
        const T th = std::tanh(u);
        const T du = kC * (T(1) + T(3) * kA * v * v);
        return T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du;
      });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(x, [](T v) { return stable_softplus(v); }, [](T v, T) { return logistic(v); });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::kRelu: return relu(x);
    case Activation::kSoftplus: return softplus(x);
    case Activation::kGelu: break;
  }
  return gelu(x);
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > 0 ? T(0.5) / y : T(0); });
}

template <typename T>
Tensor<T> inverse_sigmoid(const Tensor<T>& x, T eps) {
  return unary(
      x,
      [eps](T v) {
        const T c = std::clamp(v, eps, T(1) - eps);
        return std::log(c / (T(1) - c));
      },
      [eps](T v, T) {
        if (v < eps || v > T(1) - eps) return T(0);
        return T(1) / (v * (T(1) - v));
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw DimensionError("softmax: invalid axis for " + shape_string(x.shape()));
  int outer = 1, inner = 1;
  const int len = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < nd; ++i) inner *= x.dim(i);

  std::vector<T> out(x.size());
  const auto xv = x.values();
  if (inner == 1) {
    kernels::active<T>().softmax_rows(outer, len, xv.data(), len, out.data(), len, nullptr);
  } else {
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        const std::size_t base = static_cast<std::size_t>(o) * len * inner + in;
        T mx = xv[base];
        for (int j = 1; j < len; ++j) mx = std::max(mx, xv[base + static_cast<std::size_t>(j) * inner]);
        T s = 0;
        for (int j = 0; j < len; ++j) {
          const std::size_t idx = base + static_cast<std::size_t>(j) * inner;
          out[idx] = std::exp(xv[idx] - mx);
          s += out[idx];
        }
        for (int j = 0; j < len; ++j) out[base + static_cast<std::size_t>(j) * inner] /= s;
      }
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [outer, len, inner](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        const std::size_t base = static_cast<std::size_t>(o) * len * inner + in;
        T dotp = 0;
        for (int j = 0; j < len; ++j) {
          const std::size_t idx = base + static_cast<std::size_t>(j) * inner;
          dotp += g[idx] * y[idx];
        }
        for (int j = 0; j < len; ++j) {
          const std::size_t idx = base + static_cast<std::size_t>(j) * inner;
          px->grad[idx] += y[idx] * (g[idx] - dotp);
        }
      }
  });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const int c = x.dim(-1);
  if (static_cast<int>(gain.size()) != c || static_cast<int>(bias.size()) != c)
    throw DimensionError("layernorm: gain/bias length must equal last axis " + std::to_string(c));
  const int rows = static_cast<int>(x.size() / static_cast<std::size_t>(c));
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  std::vector<T> out(x.size());
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (int r = 0; r < rows; ++r) {
    const T* xr = xv.data() + static_cast<std::size_t>(r) * c;
    T mu = 0;
    for (int j = 0; j < c; ++j) mu += xr[j];
    mu /= T(c);
    T var = 0;
    for (int j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= T(c);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int j = 0; j < c; ++j) {
      const std::size_t idx = static_cast<std::size_t>(r) * c + j;
      (*xhat)[idx] = (xr[j] - mu) * rs;
      out[idx] = (*xhat)[idx] * gv[j] + bv[j];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gain, bias}, [rows, c, xhat, rstd](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    Node<T>* pg = grad_target(self, 1);
    Node<T>* pb = grad_target(self, 2);
    const auto& gv = self.parents[1]->value;
    const auto& g = self.grad;
    const auto& xh = *xhat;
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * c;
      if (px) {
        T m1 = 0, m2 = 0;
        for (int j = 0; j < c; ++j) {
          const T dxh = g[base + j] * gv[j];
          m1 += dxh;
          m2 += dxh * xh[base + j];
        }
        m1 /= T(c);
        m2 /= T(c);
        const T rs = (*rstd)[r];
        for (int j = 0; j < c; ++j) {
          const T dxh = g[base + j] * gv[j];
          px->grad[base + j] += rs * (dxh - m1 - xh[base + j] * m2);
        }
      }
      for (int j = 0; j < c; ++j) {
        if (pg) pg->grad[j] += g[base + j] * xh[base + j];
        if (pb) pb->grad[j] += g[base + j];
      }
    }
  });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> targets) {
  if (targets.size() != logits.size())
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.size()) + " logits");
  auto t = std::make_shared<std::vector<T>>(targets.begin(), targets.end());
  std::vector<T> out(logits.size());
  const auto xv = logits.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(xv[i]) - xv[i] * (*t)[i];
  return make_result<T>(logits.shape(), std::move(out), {logits}, [t](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      px->grad[i] += self.grad[i] * (logistic(px->value[i]) - (*t)[i]);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.values()) s += v;
  return make_result<T>({1}, {s}, {x}, [](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    const T g = self.grad[0];
    for (auto& gi : px->grad) gi += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.size()));
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int> rows) {
  require_2d(x, "gather_rows");
  const int c = x.cols();
  const int n = x.rows();
  if (rows.empty()) throw DimensionError("gather_rows: empty index");
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  std::vector<T> out(rows.size() * static_cast<std::size_t>(c));
  const auto xv = x.values();
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const int r = (*idx)[i];
    if (r < 0 || r >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r) * c, c, out.begin() + static_cast<std::ptrdiff_t>(i) * c);
  }
  return make_result<T>({static_cast<int>(rows.size()), c}, std::move(out), {x}, [idx, c](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const std::size_t src = static_cast<std::size_t>((*idx)[i]) * c;
      for (int j = 0; j < c; ++j) px->grad[src + j] += self.grad[i * c + j];
    }
  });
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::span<const int> flat_index) {
  if (flat_index.empty()) throw DimensionError("gather: empty index");
  auto idx = std::make_shared<std::vector<int>>(flat_index.begin(), flat_index.end());
  std::vector<T> out(idx->size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const int f = (*idx)[i];
    if (f < 0 || static_cast<std::size_t>(f) >= xv.size()) throw DimensionError("gather: index out of range");
    out[i] = xv[f];
  }
  return make_result<T>({static_cast<int>(idx->size())}, std::move(out), {x}, [idx](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < idx->size(); ++i) px->grad[(*idx)[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int begin, int end) {
  require_2d(x, "slice_cols");
  const int r = x.rows(), c = x.cols();
  if (begin < 0 || end > c || begin >= end) throw DimensionError("slice_cols: invalid range");
  const int w = end - begin;
  std::vector<T> out(static_cast<std::size_t>(r) * w);
  const auto xv = x.values();
  for (int i = 0; i < r; ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i) * c + begin, w, out.begin() + static_cast<std::ptrdiff_t>(i) * w);
  return make_result<T>({r, w}, std::move(out), {x}, [r, c, w, begin](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        px->grad[static_cast<std::size_t>(i) * c + begin + j] += self.grad[static_cast<std::size_t>(i) * w + j];
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int r = parts[0].rows();
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != r) throw DimensionError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(static_cast<std::size_t>(r) * total);
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    const int w = widths[k];
    for (int i = 0; i < r; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i) * w, w, out.begin() + static_cast<std::ptrdiff_t>(i) * total + off);
    off += w;
  }
  return make_result<T>({r, total}, std::move(out), parts, [r, total, widths](Node<T>& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const int w = widths[k];
      if (Node<T>* p = grad_target(self, k))
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < w; ++j)
            p->grad[static_cast<std::size_t>(i) * w + j] += self.grad[static_cast<std::size_t>(i) * total + off + j];
      off += w;
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) throw DimensionError("reshape: element count mismatch");
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
  return Tensor<T>(x.shape(), std::vector<T>(x.values().begin(), x.values().end()), false);
}

#define DSDET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> maximum(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> minimum(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                         \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> gelu(const Tensor<T>&);                                                  \
  template Tensor<T> softplus(const Tensor<T>&);                                              \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                \
  template Tensor<T> abs(const Tensor<T>&);                                                   \
  template Tensor<T> square(const Tensor<T>&);                                                \
  template Tensor<T> sqrt(const Tensor<T>&);                                                  \
  template Tensor<T> inverse_sigmoid(const Tensor<T>&, T);                                    \
  template Tensor<T> softmax(const Tensor<T>&, int);                                          \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> bce_with_logits(const Tensor<T>&, std::span<const T>);                   \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int>);                     \
  template Tensor<T> gather(const Tensor<T>&, std::span<const int>);                          \
  template Tensor<T> slice_cols(const Tensor<T>&, int, int);                                  \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> stop_gradient(const Tensor<T>&);

DSDET_INSTANTIATE_OPS(float)
DSDET_INSTANTIATE_OPS(double)

#undef DSDET_INSTANTIATE_OPS

}  // namespace dsdet::numerics
