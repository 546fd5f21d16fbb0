// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsdet/kernels/kernels.hpp"

namespace dsdet::kernels::scalar {
namespace {

template <typename T>
inline T at(const T* p, int ld, Trans t, int row, int col) {
  return t == Trans::kNo ? p[static_cast<std::size_t>(row) * ld + col] : p[static_cast<std::size_t>(col) * ld + row];
}

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
          bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    for (int p = 0; p < k; ++p) {
      const T av = at(a, lda, ta, i, p);
      for (int j = 0; j < n; ++j) crow[j] += av * at(b, ldb, tb, p, j);
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void softmax_rows(int rows, int cols, const T* x, int ldx, T* y, int ldy, const unsigned char* mask) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<std::size_t>(r) * ldx;
    T* yr = y + static_cast<std::size_t>(r) * ldy;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < cols; ++j)
      if (!mask || mask[j]) mx = std::max(mx, xr[j]);
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(yr, yr + cols, T(0));
      continue;
    }
    T sum = 0;
    for (int j = 0; j < cols; ++j) {
      const T e = (!mask || mask[j]) ? std::exp(xr[j] - mx) : T(0);
      yr[j] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

template <typename T>
const KernelTable<T> kTable{Isa::kScalar, &gemm<T>, &axpy<T>, &dot<T>, &softmax_rows<T>};

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  return kTable<T>;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace dsdet::kernels::scalar
