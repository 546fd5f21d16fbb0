// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check (see dispatch.cpp).

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dsdet/kernels/kernels.hpp"

namespace dsdet::kernels::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using R = __m256;
  static constexpr int kWidth = 8;
  static R load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, R v) { _mm256_storeu_ps(p, v); }
  static R set1(float v) { return _mm256_set1_ps(v); }
  static R zero() { return _mm256_setzero_ps(); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_ps(a, b, c); }
  static R add(R a, R b) { return _mm256_add_ps(a, b); }
  static R mul(R a, R b) { return _mm256_mul_ps(a, b); }
  static R max(R a, R b) { return _mm256_max_ps(a, b); }
  static float hsum(R v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
  static float hmax(R v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
  }
};

template <>
struct Vec<double> {
  using R = __m256d;
  static constexpr int kWidth = 4;
  static R load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, R v) { _mm256_storeu_pd(p, v); }
  static R set1(double v) { return _mm256_set1_pd(v); }
  static R zero() { return _mm256_setzero_pd(); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_pd(a, b, c); }
  static R add(R a, R b) { return _mm256_add_pd(a, b); }
  static R mul(R a, R b) { return _mm256_mul_pd(a, b); }
  static R max(R a, R b) { return _mm256_max_pd(a, b); }
  static double hsum(R v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
};

// Cephes-style exp for 8 floats; max relative error around 2 ulp on [-87, 88].
inline __m256 exp256(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
  x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_set1_ps(1.9875691500E-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507E-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073E-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894E-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459E-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201E-1f));
  y = _mm256_fmadd_ps(y, z, x);
  y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));
  __m256i n = _mm256_cvttps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

template <typename T, int kRows>
void gemm_rows(int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  using V = Vec<T>;
  using R = typename V::R;
  constexpr int W = V::kWidth;
  int j = 0;
  for (; j + 2 * W <= n; j += 2 * W) {
    R c0[kRows];
    R c1[kRows];
    for (int r = 0; r < kRows; ++r) {
      T* cr = c + static_cast<std::size_t>(r) * ldc + j;
      c0[r] = accumulate ? V::load(cr) : V::zero();
      c1[r] = accumulate ? V::load(cr + W) : V::zero();
    }
    for (int p = 0; p < k; ++p) {
      const T* bp = b + static_cast<std::size_t>(p) * ldb + j;
      const R b0 = V::load(bp);
      const R b1 = V::load(bp + W);
      for (int r = 0; r < kRows; ++r) {
        const R av = V::set1(a[static_cast<std::size_t>(r) * lda + p]);
        c0[r] = V::fma(av, b0, c0[r]);
        c1[r] = V::fma(av, b1, c1[r]);
      }
    }
    for (int r = 0; r < kRows; ++r) {
      T* cr = c + static_cast<std::size_t>(r) * ldc + j;
      V::store(cr, c0[r]);
      V::store(cr + W, c1[r]);
    }
  }
  for (; j + W <= n; j += W) {
    R c0[kRows];
    for (int r = 0; r < kRows; ++r)
      c0[r] = accumulate ? V::load(c + static_cast<std::size_t>(r) * ldc + j) : V::zero();
    for (int p = 0; p < k; ++p) {
      const R b0 = V::load(b + static_cast<std::size_t>(p) * ldb + j);
      for (int r = 0; r < kRows; ++r) c0[r] = V::fma(V::set1(a[static_cast<std::size_t>(r) * lda + p]), b0, c0[r]);
    }
    for (int r = 0; r < kRows; ++r) V::store(c + static_cast<std::size_t>(r) * ldc + j, c0[r]);
  }
  for (; j < n; ++j) {
    for (int r = 0; r < kRows; ++r) {
      T s = accumulate ? c[static_cast<std::size_t>(r) * ldc + j] : T(0);
      for (int p = 0; p < k; ++p) s += a[static_cast<std::size_t>(r) * lda + p] * b[static_cast<std::size_t>(p) * ldb + j];
      c[static_cast<std::size_t>(r) * ldc + j] = s;
    }
  }
}

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4)
    gemm_rows<T, 4>(n, k, a + static_cast<std::size_t>(i) * lda, lda, b, ldb, c + static_cast<std::size_t>(i) * ldc,
                    ldc, accumulate);
  const T* ai = a + static_cast<std::size_t>(i) * lda;
  T* ci = c + static_cast<std::size_t>(i) * ldc;
  switch (m - i) {
    case 3: gemm_rows<T, 3>(n, k, ai, lda, b, ldb, ci, ldc, accumulate); break;
    case 2: gemm_rows<T, 2>(n, k, ai, lda, b, ldb, ci, ldc, accumulate); break;
    case 1: gemm_rows<T, 1>(n, k, ai, lda, b, ldb, ci, ldc, accumulate); break;
    default: break;
  }
}

// Transposes a (rows x cols, ld) into a packed cols x rows buffer.
template <typename T>
const T* pack_transposed(const T* src, int rows, int cols, int ld, std::vector<T>& buf) {
  buf.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const T* s = src + static_cast<std::size_t>(r) * ld;
    for (int c = 0; c < cols; ++c) buf[static_cast<std::size_t>(c) * rows + r] = s[c];
  }
  return buf.data();
}

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
          bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate)
      for (int i = 0; i < m; ++i) std::fill(c + static_cast<std::size_t>(i) * ldc, c + static_cast<std::size_t>(i) * ldc + n, T(0));
    return;
  }
  thread_local std::vector<T> abuf;
  thread_local std::vector<T> bbuf;
  if (ta == Trans::kYes) {
    a = pack_transposed(a, k, m, lda, abuf);
    lda = k;
  }
  if (tb == Trans::kYes) {
    b = pack_transposed(b, n, k, ldb, bbuf);
    ldb = n;
  }
  gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  const auto av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::fma(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  constexpr std::size_t W = V::kWidth;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    acc0 = V::fma(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fma(V::load(x + i + W), V::load(y + i + W), acc1);
  }
  for (; i + W <= n; i += W) acc0 = V::fma(V::load(x + i), V::load(y + i), acc0);
  T s = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void softmax_rows_f32(int rows, int cols, const float* x, int ldx, float* y, int ldy, const unsigned char* mask) {
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  thread_local std::vector<float> keep;
  thread_local std::vector<float> bias;
  if (mask) {
    keep.resize(static_cast<std::size_t>(cols));
    bias.resize(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) {
      keep[j] = mask[j] ? 1.0f : 0.0f;
      bias[j] = mask[j] ? 0.0f : kNegInf;
    }
  }
  for (int r = 0; r < rows; ++r) {
    const float* xr = x + static_cast<std::size_t>(r) * ldx;
    float* yr = y + static_cast<std::size_t>(r) * ldy;
    __m256 vmax = _mm256_set1_ps(kNegInf);
    int j = 0;
    for (; j + 8 <= cols; j += 8) {
      __m256 v = _mm256_loadu_ps(xr + j);
      if (mask) v = _mm256_add_ps(v, _mm256_loadu_ps(bias.data() + j));
      vmax = _mm256_max_ps(vmax, v);
    }
    float mx = Vec<float>::hmax(vmax);
    for (; j < cols; ++j)
      if (!mask || mask[j]) mx = std::max(mx, xr[j]);
    if (mx == kNegInf) {
      std::fill(yr, yr + cols, 0.0f);
      continue;
    }
    const __m256 vmx = _mm256_set1_ps(mx);
    __m256 vsum = _mm256_setzero_ps();
    j = 0;
    for (; j + 8 <= cols; j += 8) {
      __m256 e = exp256(_mm256_sub_ps(_mm256_loadu_ps(xr + j), vmx));
      if (mask) e = _mm256_mul_ps(e, _mm256_loadu_ps(keep.data() + j));
      _mm256_storeu_ps(yr + j, e);
      vsum = _mm256_add_ps(vsum, e);
    }
    float sum = Vec<float>::hsum(vsum);
    for (; j < cols; ++j) {
      const float e = (!mask || mask[j]) ? std::exp(xr[j] - mx) : 0.0f;
      yr[j] = e;
      sum += e;
    }
    const __m256 inv = _mm256_set1_ps(1.0f / sum);
    j = 0;
    for (; j + 8 <= cols; j += 8) _mm256_storeu_ps(yr + j, _mm256_mul_ps(_mm256_loadu_ps(yr + j), inv));
    const float s = 1.0f / sum;
    for (; j < cols; ++j) yr[j] *= s;
  }
}

const KernelTable<float> kTableF32{Isa::kAvx2, &gemm<float>, &axpy<float>, &dot<float>, &softmax_rows_f32};

}  // namespace

template <>
const KernelTable<float>& table<float>() {
  return kTableF32;
}

template <>
const KernelTable<double>& table<double>() {
  // Double softmax keeps the libm exp: 64-bit runs are the gradient-check path.
  static const KernelTable<double> kTableF64{Isa::kAvx2, &gemm<double>, &axpy<double>, &dot<double>,
                                             scalar::table<double>().softmax_rows};
  return kTableF64;
}

}  // namespace dsdet::kernels::avx2
