// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense arithmetic primitives used by the convolution and loss code.
//
// Every primitive has a portable scalar reference in `usrnet::simd::scalar`
// and, on x86-64, an AVX2+FMA variant in `usrnet::simd::avx2`. The unqualified
// entry points dispatch at runtime on the active instruction set, which starts
// as the best the CPU supports and can be pinned with set_isa() or the
// USRNET_SIMD environment variable ("scalar" or "avx2").
//
// All matrices are row-major with explicit leading dimensions.

#pragma once

#include <cstddef>
#include <string_view>

namespace usrnet::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Best instruction set available on this CPU and build.
Isa detected_isa();
/// Instruction set the dispatching entry points currently use.
Isa active_isa();
/// Pins dispatch; throws std::runtime_error if `isa` is unavailable.
void set_isa(Isa isa);
bool isa_available(Isa isa);

namespace scalar {
template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);
template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);
template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <class T>
T dot(std::size_t n, const T* x, const T* y);
template <class T>
T sum_abs_diff(std::size_t n, const T* x, const T* y);
}  // namespace scalar

namespace avx2 {
template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);
template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);
template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <class T>
T dot(std::size_t n, const T* x, const T* y);
template <class T>
T sum_abs_diff(std::size_t n, const T* x, const T* y);
}  // namespace avx2

/// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);
/// C[m,n] (+)= A[m,k] * B[n,k]^T
template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate);
/// y += alpha * x
template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <class T>
T dot(std::size_t n, const T* x, const T* y);
/// sum |x_i - y_i|
template <class T>
T sum_abs_diff(std::size_t n, const T* x, const T* y);

}  // namespace usrnet::simd
