// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "usrnet/simd/kernels.hpp"

using namespace usrnet;
using ad::Graph;
using ad::Parameter;
using ad::Var;

namespace {

Parameter<double> param(const std::string& name, Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  Parameter<double> p(name, {s.c, s.h, s.w}, s);
  p.value = test::random_tensor(s, seed, lo, hi);
  return p;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d matches the brute-force oracle", "[ops]") {
  for (auto [in, out, k, dil, h, w] : {std::tuple{1, 1, 3, 1, 4, 4}, {2, 3, 3, 1, 7, 5}, {3, 4, 3, 2, 9, 8},
                                       {4, 2, 1, 1, 5, 6}, {2, 2, 5, 1, 6, 6}}) {
    CAPTURE(in, out, k, dil, h, w);
    Graph<double> g(false);
    const auto x = test::random_tensor({in, h, w}, 1);
    const auto wt = test::random_tensor({out, in, k * k}, 2);
    const auto b = test::random_tensor({out, 1, 1}, 3);
    auto y = ops::conv2d(g.constant(x), g.constant(wt), g.constant(b), dil);
    REQUIRE(y.shape() == Shape{out, h, w});
    REQUIRE(max_abs_diff(y.value(), test::conv_oracle(x, wt, &b, k, dil)) < 1e-12);
    auto y0 = ops::conv2d(g.constant(x), g.constant(wt), Var<double>{}, dil);
    REQUIRE(max_abs_diff(y0.value(), test::conv_oracle(x, wt, nullptr, k, dil)) < 1e-12);
  }
}

TEST_CASE("conv2d is identical under scalar and SIMD dispatch", "[ops][simd]") {
  const auto original = simd::active_isa();
  const auto x = test::random_tensor<float>({5, 13, 11}, 4);
  const auto wt = test::random_tensor<float>({7, 5, 9}, 5);
  auto run = [&] {
    Graph<float> g(false);
    return ops::conv2d(g.constant(x), g.constant(wt), Var<float>{}, 2).value();
  };
  simd::set_isa(simd::Isa::scalar);
  const auto a = run();
  simd::set_isa(simd::detected_isa());
  const auto b = run();
  simd::set_isa(original);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a[i] - b[i]) < 1e-5f);
}

TEST_CASE("laplacian: annihilation, impulse stamp, replicate border, linearity", "[ops][laplacian]") {
  Graph<double> g(false);
  SECTION("constants and affine ramps vanish") {
    Tensor<double> c(2, 6, 7, 0.42);
    const Tensor<double> out = ops::laplacian(g.constant(c)).value();
    for (double v : out.span()) REQUIRE(std::abs(v) < 1e-12);
    Tensor<double> ramp(1, 8, 9);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 9; ++j) ramp(0, i, j) = 0.3 * i - 0.7 * j + 0.1;
    const auto r = ops::laplacian(g.constant(ramp)).value();
    for (int i = 1; i < 7; ++i)
      for (int j = 1; j < 8; ++j) REQUIRE(std::abs(r(0, i, j)) < 1e-12);
  }
  SECTION("an interior impulse stamps the kernel") {
    Tensor<double> d(1, 5, 5);
    d(0, 2, 2) = 1;
    const auto r = ops::laplacian(g.constant(d)).value();
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        double expect = 0;
        if (i == 2 && j == 2) expect = 4;
        else if (std::abs(i - 2) + std::abs(j - 2) == 1) expect = -1;
        REQUIRE(r(0, i, j) == expect);
      }
  }
  SECTION("matches the replicate-padded oracle everywhere") {
    const auto x = test::random_tensor({3, 6, 5}, 11);
    REQUIRE(max_abs_diff(ops::laplacian(g.constant(x)).value(), test::laplacian_oracle(x)) < 1e-12);
  }
  SECTION("linear") {
    const auto x = test::random_tensor({2, 7, 7}, 12), y = test::random_tensor({2, 7, 7}, 13);
    Tensor<double> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 1.7 * x[i] - 0.4 * y[i];
    const auto lx = ops::laplacian(g.constant(x)).value(), ly = ops::laplacian(g.constant(y)).value();
    const auto lm = ops::laplacian(g.constant(mix)).value();
    for (std::size_t i = 0; i < lm.size(); ++i) {
      const double expect = 1.7 * lx[i] - 0.4 * ly[i];
      REQUIRE(std::abs(lm[i] - expect) <= 1e-6 * std::max(1.0, std::abs(expect)));
    }
  }
  SECTION("rejects maps smaller than 3x3") {
    REQUIRE_THROWS_AS(ops::laplacian(g.constant(Tensor<double>(1, 2, 5))), std::invalid_argument);
  }
  SECTION("the unchecked variant handles 1- and 2-pixel maps") {
    for (auto [h, w] : {std::pair{1, 1}, {2, 2}, {1, 4}, {2, 3}}) {
      const auto x = test::random_tensor({2, h, w}, 14);
      REQUIRE(max_abs_diff(ops::laplacian_any(g.constant(x)).value(), test::laplacian_oracle(x)) < 1e-12);
    }
  }
}

TEST_CASE("pooling, upsampling, padding and cropping shapes", "[ops]") {
  Graph<double> g(false);
  const auto x = test::random_tensor({2, 5, 7}, 21);
  auto mp = ops::max_pool2(g.constant(x));
  REQUIRE(mp.shape() == Shape{2, 3, 4});
  REQUIRE(mp.value()(1, 2, 3) == x(1, 4, 6));
  REQUIRE(mp.value()(0, 0, 0) == std::max({x(0, 0, 0), x(0, 0, 1), x(0, 1, 0), x(0, 1, 1)}));
  REQUIRE(ops::upsample2(g.constant(x)).shape() == Shape{2, 10, 14});
  auto padded = ops::reflect_pad(g.constant(x), 3, 1);
  REQUIRE(padded.shape() == Shape{2, 8, 8});
  // Reflection without repeating the edge row.
  REQUIRE(padded.value()(0, 5, 2) == x(0, 3, 2));
  REQUIRE(padded.value()(0, 7, 2) == x(0, 1, 2));
  REQUIRE(padded.value()(1, 0, 7) == x(1, 0, 5));
  auto back = ops::crop(padded, 0, 0, 5, 7);
  REQUIRE(back.value() == x);
}

TEST_CASE("op gradients match central differences", "[ops][grad]") {
  auto x = param("x", {3, 5, 4}, 31);
  auto y = param("y", {3, 5, 4}, 32);
  auto w = param("w", {2, 3, 9}, 33, -0.5, 0.5);
  auto b = param("b", {2, 1, 1}, 34);
  auto gamma = param("gamma", {3, 1, 1}, 35, 0.5, 1.5);
  auto beta = param("beta", {3, 1, 1}, 36);
  auto slope = param("slope", {3, 1, 1}, 37, 0.1, 0.4);
  auto z = param("z", {3, 1, 1}, 38);
  auto positive = param("p", {3, 5, 4}, 39, 0.5, 2.0);
  const Tensor<double> weights = test::random_tensor({3, 5, 4}, 40);

  using F = std::function<Var<double>(Graph<double>&)>;
  // Each scalar is a random weighted sum of the op output.
  auto reduce = [](const Var<double>& v) { return ops::weighted_sum(v, test::random_tensor(v.shape(), 99)); };
  const std::vector<std::tuple<std::string, std::vector<Parameter<double>*>, F>> cases{
      {"conv2d", {&x, &w, &b}, [&](Graph<double>& g) { return reduce(ops::conv2d(g.parameter(x), g.parameter(w), g.parameter(b))); }},
      {"conv2d dilated", {&x, &w, &b},
       [&](Graph<double>& g) { return reduce(ops::conv2d(g.parameter(x), g.parameter(w), g.parameter(b), 2)); }},
      {"laplacian", {&x}, [&](Graph<double>& g) { return reduce(ops::laplacian(g.parameter(x))); }},
      {"add/sub/mul", {&x, &y},
       [&](Graph<double>& g) {
         auto a = g.parameter(x), c = g.parameter(y);
         return reduce(ops::mul(ops::add(a, c), ops::sub(a, c)));
       }},
      {"div", {&x, &positive}, [&](Graph<double>& g) { return reduce(ops::div(g.parameter(x), g.parameter(positive))); }},
      {"scale/add_scalar", {&x}, [&](Graph<double>& g) { return reduce(ops::add_scalar(ops::scale(g.parameter(x), 1.3), 0.2)); }},
      {"layer_norm", {&x, &gamma, &beta},
       [&](Graph<double>& g) { return reduce(ops::layer_norm_channels(g.parameter(x), g.parameter(gamma), g.parameter(beta))); }},
      {"prelu", {&x, &slope}, [&](Graph<double>& g) { return reduce(ops::prelu(g.parameter(x), g.parameter(slope))); }},
      {"relu", {&x}, [&](Graph<double>& g) { return reduce(ops::relu(g.parameter(x))); }},
      {"sigmoid", {&x}, [&](Graph<double>& g) { return reduce(ops::sigmoid(g.parameter(x))); }},
      {"max_pool2", {&x}, [&](Graph<double>& g) { return reduce(ops::max_pool2(g.parameter(x))); }},
      {"avg_pool2", {&x}, [&](Graph<double>& g) { return reduce(ops::avg_pool2(g.parameter(x))); }},
      {"upsample2", {&x}, [&](Graph<double>& g) { return reduce(ops::upsample2(g.parameter(x))); }},
      {"concat", {&x, &y}, [&](Graph<double>& g) { return reduce(ops::concat_channels<double>({g.parameter(x), g.parameter(y)})); }},
      {"spatial_mean/broadcast", {&x, &z},
       [&](Graph<double>& g) { return reduce(ops::broadcast_add(g.parameter(x), ops::add(ops::spatial_mean(g.parameter(x)), g.parameter(z)))); }},
      {"reflect_pad/crop", {&x}, [&](Graph<double>& g) { return reduce(ops::crop(ops::reflect_pad(g.parameter(x), 3, 2), 1, 1, 6, 4)); }},
      {"luminance", {&x}, [&](Graph<double>& g) { return reduce(ops::luminance(g.parameter(x))); }},
      {"mean_abs_diff", {&x, &y}, [&](Graph<double>& g) { return ops::mean_abs_diff(g.parameter(x), g.parameter(y)); }},
      {"sum", {&x}, [&](Graph<double>& g) { return ops::sum(ops::mul(g.parameter(x), g.parameter(x))); }},
      {"weighted_sum", {&x}, [&](Graph<double>& g) { return ops::weighted_sum(g.parameter(x), weights); }},
  };
  for (const auto& [name, params, f] : cases) {
    CAPTURE(name);
    const auto r = test::grad_check(params, f, 24, 7);
    CAPTURE(r.worst);
    REQUIRE(r.max_rel <= 1e-4);
  }
}

TEST_CASE("ops reject mismatched shapes", "[ops]") {
  Graph<double> g(false);
  auto a = g.constant(Tensor<double>(1, 4, 4)), b = g.constant(Tensor<double>(1, 4, 5));
  REQUIRE_THROWS_AS(ops::add(a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ops::mean_abs_diff(a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ops::conv2d(a, g.constant(Tensor<double>(2, 3, 9)), Var<double>{}), std::invalid_argument);
}
