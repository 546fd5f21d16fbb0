// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dsdet/kernels/kernels.hpp"

namespace dsdet::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(DSDET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect_default() {
  if (const char* env = std::getenv("DSDET_ISA")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect_default()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  if (isa == Isa::kScalar) return true;
  static const bool avx2 = cpu_has_avx2();
  return avx2;
}

Isa current_isa() { return selected().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument("ISA not available: " + std::string(isa_name(isa)));
  selected().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table_for(Isa isa) {
#if defined(DSDET_HAVE_AVX2)
  if (isa == Isa::kAvx2) return avx2::table<T>();
#endif
  (void)isa;
  return scalar::table<T>();
}

template <typename T>
const KernelTable<T>& active() {
  return table_for<T>(current_isa());
}

template const KernelTable<float>& table_for<float>(Isa);
template const KernelTable<double>& table_for<double>(Isa);
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace dsdet::kernels
