// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/simd/kernels.hpp"

#include <cmath>

namespace usrnet::simd::scalar {

template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    }
    const T* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      const T v = dot<T>(static_cast<std::size_t>(k), arow, b + static_cast<std::ptrdiff_t>(j) * ldb);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
T sum_abs_diff(std::size_t n, const T* x, const T* y) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(x[i] - y[i]);
  return acc;
}

#define USRNET_INSTANTIATE(T)                                                                      \
  template void gemm_nn<T>(int, int, int, const T*, int, const T*, int, T*, int, bool);           \
  template void gemm_nt<T>(int, int, int, const T*, int, const T*, int, T*, int, bool);           \
  template void axpy<T>(std::size_t, T, const T*, T*);                                            \
  template T dot<T>(std::size_t, const T*, const T*);                                             \
  template T sum_abs_diff<T>(std::size_t, const T*, const T*);

USRNET_INSTANTIATE(float)
USRNET_INSTANTIATE(double)
#undef USRNET_INSTANTIATE

}  // namespace usrnet::simd::scalar
