// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "usrnet/simd/kernels.hpp"

using namespace usrnet;

namespace {

template <class T>
std::vector<T> rand_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <class T>
T tol();
template <>
float tol<float>() { return 2e-5f; }
template <>
double tol<double>() { return 1e-12; }

// Naive triple loop, independent of both kernel sets.
template <class T>
void naive_nn(int m, int n, int k, const std::vector<T>& a, int lda, const std::vector<T>& b, int ldb, std::vector<T>& c,
              int ldc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) s += static_cast<double>(a[i * lda + p]) * b[p * ldb + j];
      c[i * ldc + j] = static_cast<T>(s);
    }
}

}  // namespace

TEMPLATE_TEST_CASE("scalar gemm_nn matches a naive triple loop", "[simd]", float, double) {
  using T = TestType;
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {3, 7, 5}, {16, 33, 27}, {9, 64, 144}}) {
    auto a = rand_vec<T>(static_cast<std::size_t>(m * k), 1);
    auto b = rand_vec<T>(static_cast<std::size_t>(k * n), 2);
    std::vector<T> c(static_cast<std::size_t>(m * n)), ref(c.size());
    simd::scalar::gemm_nn<T>(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    naive_nn<T>(m, n, k, a, k, b, n, ref, n);
    for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(std::abs(c[i] - ref[i]) <= tol<T>() * k);
  }
}

#ifdef USRNET_HAVE_AVX2

TEMPLATE_TEST_CASE("avx2 kernels agree with the scalar reference", "[simd]", float, double) {
  using T = TestType;
  if (!simd::isa_available(simd::Isa::avx2)) SKIP("CPU lacks AVX2/FMA");

  // Shapes chosen to hit full tiles, column tails and row tails.
  const std::vector<std::tuple<int, int, int>> shapes{{1, 1, 1},   {4, 8, 3},    {5, 17, 9},   {7, 31, 27},
                                                      {13, 64, 1}, {16, 100, 72}, {33, 4097, 9}, {2, 3, 300}};
  for (auto [m, n, k] : shapes) {
    CAPTURE(m, n, k);
    for (bool acc : {false, true}) {
      auto a = rand_vec<T>(static_cast<std::size_t>(m * (k + 3)), 3);
      auto b = rand_vec<T>(static_cast<std::size_t>(k * (n + 5)), 4);
      auto c0 = rand_vec<T>(static_cast<std::size_t>(m * (n + 2)), 5);
      auto c1 = c0;
      simd::scalar::gemm_nn<T>(m, n, k, a.data(), k + 3, b.data(), n + 5, c0.data(), n + 2, acc);
      simd::avx2::gemm_nn<T>(m, n, k, a.data(), k + 3, b.data(), n + 5, c1.data(), n + 2, acc);
      for (std::size_t i = 0; i < c0.size(); ++i) REQUIRE(std::abs(c0[i] - c1[i]) <= tol<T>() * (k + 1));

      auto bt = rand_vec<T>(static_cast<std::size_t>(n * (k + 1)), 6);
      auto d0 = c0, d1 = c0;
      simd::scalar::gemm_nt<T>(m, n, k, a.data(), k + 3, bt.data(), k + 1, d0.data(), n + 2, acc);
      simd::avx2::gemm_nt<T>(m, n, k, a.data(), k + 3, bt.data(), k + 1, d1.data(), n + 2, acc);
      for (std::size_t i = 0; i < d0.size(); ++i) REQUIRE(std::abs(d0[i] - d1[i]) <= tol<T>() * (k + 1));
    }
  }

  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 33u, 1000u, 4099u}) {
    CAPTURE(n);
    auto x = rand_vec<T>(n, 7), y0 = rand_vec<T>(n, 8);
    auto y1 = y0;
    simd::scalar::axpy<T>(n, T(0.37), x.data(), y0.data());
    simd::avx2::axpy<T>(n, T(0.37), x.data(), y1.data());
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(y0[i] - y1[i]) <= tol<T>());
    REQUIRE(std::abs(simd::scalar::dot<T>(n, x.data(), y0.data()) - simd::avx2::dot<T>(n, x.data(), y0.data())) <=
            tol<T>() * static_cast<T>(n + 1));
    REQUIRE(std::abs(simd::scalar::sum_abs_diff<T>(n, x.data(), y0.data()) -
                     simd::avx2::sum_abs_diff<T>(n, x.data(), y0.data())) <= tol<T>() * static_cast<T>(n + 1));
  }
}

TEST_CASE("dispatch can be pinned to either instruction set", "[simd]") {
  const auto original = simd::active_isa();
  simd::set_isa(simd::Isa::scalar);
  REQUIRE(simd::active_isa() == simd::Isa::scalar);
  if (simd::isa_available(simd::Isa::avx2)) {
    simd::set_isa(simd::Isa::avx2);
    REQUIRE(simd::active_isa() == simd::Isa::avx2);
  } else {
    REQUIRE_THROWS(simd::set_isa(simd::Isa::avx2));
  }
  simd::set_isa(original);
}

#endif

TEST_CASE("dispatching entry points produce the reference result", "[simd]") {
  auto a = rand_vec<float>(6 * 10, 9), b = rand_vec<float>(10 * 13, 10);
  std::vector<float> c(6 * 13), ref(6 * 13);
  simd::gemm_nn<float>(6, 13, 10, a.data(), 10, b.data(), 13, c.data(), 13, false);
  naive_nn<float>(6, 13, 10, a, 10, b, 13, ref, 13);
  for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(std::abs(c[i] - ref[i]) <= 1e-5f);
  REQUIRE(simd::isa_name(simd::Isa::scalar) == "scalar");
}
