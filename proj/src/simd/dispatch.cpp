// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Runtime selection between kernel variants. No intrinsics in this file.

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "usrnet/simd/kernels.hpp"

namespace usrnet::simd {
namespace {

bool cpu_has_avx2() {
#if defined(USRNET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  if (const char* env = std::getenv("USRNET_SIMD")) {
    const std::string want(env);
    if (want == "scalar") isa = Isa::scalar;
    // "avx2" only takes effect when the CPU supports it.
  }
  return isa;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) throw std::runtime_error("instruction set not available: " + std::string(isa_name(isa)));
  active().store(isa, std::memory_order_relaxed);
}

#if defined(USRNET_HAVE_AVX2)
#define USRNET_DISPATCH(fn, ...) \
  return active_isa() == Isa::avx2 ? avx2::fn<T>(__VA_ARGS__) : scalar::fn<T>(__VA_ARGS__)
#else
#define USRNET_DISPATCH(fn, ...) return scalar::fn<T>(__VA_ARGS__)
#endif

template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  USRNET_DISPATCH(gemm_nn, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  USRNET_DISPATCH(gemm_nt, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  USRNET_DISPATCH(axpy, n, alpha, x, y);
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  USRNET_DISPATCH(dot, n, x, y);
}

template <class T>
T sum_abs_diff(std::size_t n, const T* x, const T* y) {
  USRNET_DISPATCH(sum_abs_diff, n, x, y);
}

#undef USRNET_DISPATCH

#define USRNET_INSTANTIATE(T)                                                                      \
  template void gemm_nn<T>(int, int, int, const T*, int, const T*, int, T*, int, bool);           \
  template void gemm_nt<T>(int, int, int, const T*, int, const T*, int, T*, int, bool);           \
  template void axpy<T>(std::size_t, T, const T*, T*);                                            \
  template T dot<T>(std::size_t, const T*, const T*);                                             \
  template T sum_abs_diff<T>(std::size_t, const T*, const T*);

USRNET_INSTANTIATE(float)
USRNET_INSTANTIATE(double)
#undef USRNET_INSTANTIATE

}  // namespace usrnet::simd
