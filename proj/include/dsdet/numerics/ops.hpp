// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations over Tensor<T>. Matrix ops expect 2-D row-major
// tensors; elementwise ops require identical shapes (no implicit broadcasting
// beyond the explicit row-broadcast helpers).

#pragma once

#include <span>
#include <vector>

#include "dsdet/numerics/tensor.hpp"

namespace dsdet::numerics {

enum class Activation { kGelu, kRelu, kSoftplus };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// [m x k] * [k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// [m x k] * [n x k]^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// x[n x in] * w[in x out] + bias[out]; bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
// Elementwise max/min; on ties the gradient goes to `a`.
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b);

// x[r x c] + row[c] broadcast over rows.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s);
// Zero gradient outside [lo, hi].
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// tanh approximation
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);
template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation act);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x);
// log(x / (1 - x)) after clamping x into [eps, 1 - eps].
template <typename T>
Tensor<T> inverse_sigmoid(const Tensor<T>& x, T eps = T(1e-5));

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

// Normalizes over the last axis, then applies gain/bias of that length.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

// Elementwise -[t log s(x) + (1-t) log(1-s(x))], evaluated in logit space.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> targets);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int> rows);
// Flat-index gather into a 1-D tensor.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::span<const int> flat_index);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int begin, int end);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Same values; the result is a graph leaf, so nothing flows back into x.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x);

}  // namespace dsdet::numerics
