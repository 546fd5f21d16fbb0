// SPDX-License-Identifier: Apache-2.0
//
// Dense arithmetic kernels used by the tensor core. Every kernel has a scalar
// reference implementation; wider ISA variants are compiled into separate
// translation units and selected once at startup (or forced by tests / the
// DSDET_ISA environment variable).

#pragma once

#include <cstddef>
#include <string_view>

namespace dsdet::kernels {

enum class Isa { kScalar, kAvx2 };

enum class Trans { kNo, kYes };

std::string_view isa_name(Isa isa);

template <typename T>
struct KernelTable {
  Isa isa;

  // c[m x n] = (accumulate ? c : 0) + op(a)[m x k] * op(b)[k x n].
  // Row-major with explicit leading dimensions. op(a) = a (m x k, lda) or
  // a^T where a is stored k x m; same for b.
  void (*gemm)(Trans ta, Trans tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c,
               int ldc, bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);

  T (*dot)(std::size_t n, const T* x, const T* y);

  // Row-wise numerically stable softmax over contiguous rows of length cols,
  // with row stride ld for both input and output. mask (may be null) holds one
  // byte per column, shared by all rows; masked columns receive probability 0
  // and a fully masked mask gives all-zero rows.
  void (*softmax_rows)(int rows, int cols, const T* x, int ldx, T* y, int ldy, const unsigned char* mask);
};

// Table for the currently selected ISA.
template <typename T>
const KernelTable<T>& active();

template <typename T>
const KernelTable<T>& table_for(Isa isa);

bool isa_available(Isa isa);

Isa current_isa();

// Forces an ISA; throws std::invalid_argument when it is unavailable.
void set_isa(Isa isa);

// RAII override used by equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(current_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}  // namespace scalar

#if defined(DSDET_HAVE_AVX2)
namespace avx2 {
template <typename T>
const KernelTable<T>& table();
}  // namespace avx2
#endif

}  // namespace dsdet::kernels
