// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher has confirmed CPU support.

#include "usrnet/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace usrnet::simd::avx2 {
namespace {

template <class T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr int kWidth = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg set1(float x) { return _mm256_set1_ps(x); }
  static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg abs_diff(Reg a, Reg b) { return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), _mm256_sub_ps(a, b)); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr int kWidth = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg set1(double x) { return _mm256_set1_pd(x); }
  static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg abs_diff(Reg a, Reg b) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), _mm256_sub_pd(a, b)); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

// Register-blocked tile: kRows rows of C times kVecs vector widths of columns,
// accumulated over the full depth k.
template <class T, int kRows, int kVecs>
inline void tile(int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  using V = Vec<T>;
  typename V::Reg acc[kRows][kVecs];
  for (int r = 0; r < kRows; ++r)
    for (int v = 0; v < kVecs; ++v) acc[r][v] = V::zero();

  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    typename V::Reg bv[kVecs];
    for (int v = 0; v < kVecs; ++v) bv[v] = V::load(brow + v * V::kWidth);
    for (int r = 0; r < kRows; ++r) {
      const typename V::Reg av = V::set1(a[static_cast<std::ptrdiff_t>(r) * lda + p]);
      for (int v = 0; v < kVecs; ++v) acc[r][v] = V::fma(av, bv[v], acc[r][v]);
    }
  }

  for (int r = 0; r < kRows; ++r) {
    T* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
    for (int v = 0; v < kVecs; ++v) {
      T* dst = crow + v * V::kWidth;
      V::store(dst, accumulate ? V::add(V::load(dst), acc[r][v]) : acc[r][v]);
    }
  }
}

template <class T, int kRows>
inline void row_block(int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  constexpr int w = Vec<T>::kWidth;
  int j = 0;
  for (; j + 2 * w <= n; j += 2 * w) tile<T, kRows, 2>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  for (; j + w <= n; j += w) tile<T, kRows, 1>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  for (; j < n; ++j) {
    for (int r = 0; r < kRows; ++r) {
      const T* arow = a + static_cast<std::ptrdiff_t>(r) * lda;
      T s = T(0);
      for (int p = 0; p < k; ++p) s += arow[p] * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
      T& dst = c[static_cast<std::ptrdiff_t>(r) * ldc + j];
      dst = accumulate ? dst + s : s;
    }
  }
}

}  // namespace

template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    row_block<T, 4>(n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b, ldb, c + static_cast<std::ptrdiff_t>(i) * ldc,
                    ldc, accumulate);
  }
  for (; i < m; ++i) {
    row_block<T, 1>(n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b, ldb, c + static_cast<std::ptrdiff_t>(i) * ldc,
                    ldc, accumulate);
  }
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  typename V::Reg s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * w <= n; i += 4 * w) {
    s0 = V::fma(V::load(x + i), V::load(y + i), s0);
    s1 = V::fma(V::load(x + i + w), V::load(y + i + w), s1);
    s2 = V::fma(V::load(x + i + 2 * w), V::load(y + i + 2 * w), s2);
    s3 = V::fma(V::load(x + i + 3 * w), V::load(y + i + 3 * w), s3);
  }
  for (; i + w <= n; i += w) s0 = V::fma(V::load(x + i), V::load(y + i), s0);
  T acc = V::hsum(V::add(V::add(s0, s1), V::add(s2, s3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
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
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  const typename V::Reg av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    V::store(y + i, V::fma(av, V::load(x + i), V::load(y + i)));
    V::store(y + i + w, V::fma(av, V::load(x + i + w), V::load(y + i + w)));
  }
  for (; i + w <= n; i += w) V::store(y + i, V::fma(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
T sum_abs_diff(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  typename V::Reg s0 = V::zero(), s1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    s0 = V::add(s0, V::abs_diff(V::load(x + i), V::load(y + i)));
    s1 = V::add(s1, V::abs_diff(V::load(x + i + w), V::load(y + i + w)));
  }
  for (; i + w <= n; i += w) s0 = V::add(s0, V::abs_diff(V::load(x + i), V::load(y + i)));
  T acc = V::hsum(V::add(s0, s1));
  for (; i < n; ++i) acc += std::abs(x[i] - y[i]);
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

}  // namespace usrnet::simd::avx2
