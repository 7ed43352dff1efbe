// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "block_harness.hpp"
#include "support.hpp"
#include "usrnet/nn_blocks.hpp"

using namespace usrnet;
using ad::Graph;
using ad::Parameter;
using ad::Var;

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor<double> add_t(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor<double> sub_t(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
  return y;
}

// LayerNorm across channels (biased variance, eps 1e-5) followed by PReLU.
Tensor<double> norm_act_oracle(const Tensor<double>& y, const Tensor<double>& gamma, const Tensor<double>& beta,
                               const Tensor<double>& slope) {
  const int c = y.channels();
  Tensor<double> out(y.shape());
  for (int i = 0; i < y.height(); ++i)
    for (int j = 0; j < y.width(); ++j) {
      double mu = 0, var = 0;
      for (int k = 0; k < c; ++k) mu += y(k, i, j);
      mu /= c;
      for (int k = 0; k < c; ++k) var += (y(k, i, j) - mu) * (y(k, i, j) - mu);
      var /= c;
      for (int k = 0; k < c; ++k) {
        const double n = gamma[k] * (y(k, i, j) - mu) / std::sqrt(var + 1e-5) + beta[k];
        out(k, i, j) = n >= 0 ? n : slope[k] * n;
      }
    }
  return out;
}

Tensor<double> scl_oracle(const nn::SCL<double>& s, const Tensor<double>& x) {
  const auto y = test::conv_oracle(x, s.conv.weight.value, &s.conv.bias.value, s.conv.kernel(), s.conv.dilation());
  return norm_act_oracle(y, s.norm.gamma.value, s.norm.beta.value, s.act.slope.value);
}

template <class Block>
void randomize_all(Block& b, std::uint64_t seed) {
  nn::ParamList<double> ps;
  b.collect(ps);
  for (auto* p : ps) test::randomize(*p, seed++, -0.6, 0.6);
  // Gains stay away from zero so normalization keeps its signal.
  for (auto* p : ps)
    if (p->name.ends_with(".gamma"))
      for (auto& v : p->value.span()) v = 1.0 + v;
}

}  // namespace

TEST_CASE("SCL: zero input, identity kernel, brute-force oracle", "[blocks][scl]") {
  Graph<double> g(false);
  SECTION("zero input with zero bias gives a finite deterministic output") {
    nn::SCL<double> s("s", 2, 3);
    nn::init_parameters(nn::ParamList<double>{&s.conv.weight, &s.conv.bias}, 5);
    const auto y = s.forward(g, g.constant(Tensor<double>(2, 5, 5))).value();
    REQUIRE(y.shape() == Shape{3, 5, 5});
    for (double v : y.span()) REQUIRE(v == 0.0);
    s.bypass_norm_act = true;
    const Tensor<double> out = s.forward(g, g.constant(Tensor<double>(2, 5, 5))).value();
    for (double v : out.span()) REQUIRE(v == 0.0);
  }
  SECTION("1x1 identity kernel with norm and activation bypassed") {
    nn::SCL<double> s("s", 3, 3, 1);
    s.conv.weight.value.fill(0.0);
    for (int c = 0; c < 3; ++c) s.conv.weight.value(c, c, 0) = 1.0;
    s.bypass_norm_act = true;
    const auto x = test::random_tensor({3, 6, 4}, 11);
    REQUIRE(max_abs_diff(s.forward(g, g.constant(x)).value(), x) == 0.0);
  }
  SECTION("3x3 on a random 1x4x4 input matches the sliding-window oracle") {
    nn::SCL<double> s("s", 1, 3);
    randomize_all(s, 20);
    const auto x = test::random_tensor({1, 4, 4}, 12);
    s.bypass_norm_act = true;
    const auto pre = s.forward(g, g.constant(x)).value();
    REQUIRE(max_abs_diff(pre, test::conv_oracle(x, s.conv.weight.value, &s.conv.bias.value, 3)) < 1e-12);
    s.bypass_norm_act = false;
    REQUIRE(max_abs_diff(s.forward(g, g.constant(x)).value(), scl_oracle(s, x)) < 1e-12);
  }
  SECTION("channel mismatch throws") {
    nn::SCL<double> s("s", 2, 3);
    REQUIRE_THROWS_AS(s.forward(g, g.constant(Tensor<double>(3, 4, 4))), std::invalid_argument);
  }
  SECTION("even kernels and zero dilation are rejected") {
    REQUIRE_THROWS_AS(nn::Conv2d<double>("c", 1, 1, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(nn::Conv2d<double>("c", 1, 1, 3, 0), std::invalid_argument);
  }
}

TEST_CASE("D-Res: path oracles, reconstruction, constant input", "[blocks][dres]") {
  Graph<double> g(false);
  SECTION("fusion input is the sum of the three independently computed paths") {
    nn::DResBlock<double> b("d", 2, 3);
    randomize_all(b, 40);
    const auto x = test::random_tensor({2, 8, 8}, 41);
    const auto lap = test::laplacian_oracle(x);
    const auto xh = test::conv_oracle(lap, b.high.weight.value, &b.high.bias.value, 3, 2);
    const auto xl = test::conv_oracle(sub_t(x, lap), b.low.weight.value, &b.low.bias.value, 3, 2);
    const auto xn = scl_oracle(b.standard, x);
    const auto p = b.paths(g, g.constant(x));
    REQUIRE(max_abs_diff(p.high.value(), xh) < 1e-12);
    REQUIRE(max_abs_diff(p.low.value(), xl) < 1e-12);
    REQUIRE(max_abs_diff(p.standard.value(), xn) < 1e-12);
    const auto fused = add_t(add_t(xh, xl), xn);
    REQUIRE(max_abs_diff(b.fused_input(p).value(), fused) < 1e-12);
    const auto out = b.forward(g, g.constant(x));
    REQUIRE(max_abs_diff(out.global.value(), scl_oracle(b.fuse, fused)) < 1e-12);
    REQUIRE(max_abs_diff(out.edge.value(), scl_oracle(b.edge, xh)) < 1e-12);
  }
  SECTION("identity frequency kernels with zero bias reconstruct the input") {
    nn::DResBlock<double> b("d", 2, 2);
    randomize_all(b, 50);
    for (auto* conv : {&b.high, &b.low}) {
      conv->weight.value.fill(0.0);
      conv->bias.value.fill(0.0);
      for (int c = 0; c < 2; ++c) conv->weight.value(c, c, 4) = 1.0;
    }
    const auto x = test::random_tensor({2, 7, 9}, 51);
    const auto p = b.paths(g, g.constant(x));
    REQUIRE(max_abs_diff(add_t(p.high.value(), p.low.value()), x) < 1e-12);
  }
  SECTION("constant input: high path sees a zero Laplacian, edge head is SCL of the bias map") {
    nn::DResBlock<double> b("d", 2, 3);
    randomize_all(b, 60);
    const Tensor<double> x(2, 6, 6, 0.37);
    const auto p = b.paths(g, g.constant(x));
    Tensor<double> bias_map(3, 6, 6);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) bias_map(c, i, j) = b.high.bias.value[c];
    REQUIRE(max_abs_diff(p.high.value(), bias_map) < 1e-12);
    REQUIRE(max_abs_diff(b.forward(g, g.constant(x)).edge.value(), scl_oracle(b.edge, bias_map)) < 1e-12);
  }
  SECTION("component masks select the active paths") {
    const auto x = test::random_tensor({2, 8, 8}, 71);
    {
      nn::DResBlock<double> b("d", 2, 3, {.frequency_paths = false});
      nn::ParamList<double> ps;
      b.collect(ps);
      for (auto* p : ps) REQUIRE_FALSE(p->name.starts_with("d.high"));
      const auto p = b.paths(g, g.constant(x));
      REQUIRE_FALSE(p.high.defined());
      REQUIRE_FALSE(p.low.defined());
      REQUIRE(nn::describe(b.components()) == "scl");
    }
    {
      nn::DResBlock<double> b("d", 2, 3, {.dilated = false});
      REQUIRE(b.high.dilation() == 1);
      REQUIRE(b.low.dilation() == 1);
      REQUIRE(nn::describe(b.components()) == "scl+K_s+K_L");
    }
    {
      nn::DResBlock<double> b("d", 2, 3, {.laplacian = false});
      randomize_all(b, 72);
      const auto p = b.paths(g, g.constant(x));
      REQUIRE_FALSE(p.low.defined());
      REQUIRE(max_abs_diff(p.high.value(), test::conv_oracle(x, b.high.weight.value, &b.high.bias.value, 3, 2)) < 1e-12);
      REQUIRE(nn::describe(b.components()) == "scl+K_d");
    }
    REQUIRE(nn::describe(nn::DResComponents{}) == "scl+K_d+K_L");
  }
  SECTION("channel mismatch throws") {
    nn::DResBlock<double> b("d", 2, 3);
    REQUIRE_THROWS_AS(b.forward(g, g.constant(Tensor<double>(1, 8, 8))), std::invalid_argument);
  }
}

TEST_CASE("S-Res: zero branch, zero input, composed oracle", "[blocks][sres]") {
  Graph<double> g(false);
  nn::SResBlock<double> b("r", 2);
  randomize_all(b, 80);
  SECTION("zero inner weights and biases give the identity") {
    for (auto* p : {&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias}) p->value.fill(0.0);
    const auto x = test::random_tensor({2, 5, 5}, 81);
    REQUIRE(max_abs_diff(b.forward(g, g.constant(x)).value(), x) == 0.0);
  }
  SECTION("zero input with zero biases gives zero") {
    for (auto* p : {&b.conv1.bias, &b.conv2.bias, &b.norm.beta}) p->value.fill(0.0);
    const Tensor<double> out = b.forward(g, g.constant(Tensor<double>(2, 4, 4))).value();
    for (double v : out.span()) REQUIRE(v == 0.0);
  }
  SECTION("random input matches the step-by-step oracle") {
    const auto x = test::random_tensor({2, 4, 4}, 82);
    auto h = test::conv_oracle(x, b.conv1.weight.value, &b.conv1.bias.value, 3);
    h = norm_act_oracle(h, b.norm.gamma.value, b.norm.beta.value, b.act.slope.value);
    const auto want = add_t(x, test::conv_oracle(h, b.conv2.weight.value, &b.conv2.bias.value, 3));
    REQUIRE(max_abs_diff(b.forward(g, g.constant(x)).value(), want) < 1e-12);
  }
  SECTION("channel mismatch throws") {
    REQUIRE_THROWS_AS(b.forward(g, g.constant(Tensor<double>(3, 4, 4))), std::invalid_argument);
  }
}

TEST_CASE("GCA: hand example, constants, zero transform, mean shift", "[blocks][gca]") {
  Graph<double> g(false);
  SECTION("1x2x2 example with identity transform") {
    nn::GCA<double> a("a", 1);
    a.fc.weight.value.fill(1.0);
    a.fc.bias.value.fill(0.0);
    Tensor<double> x(1, 2, 2);
    x(0, 0, 0) = 1, x(0, 0, 1) = 2, x(0, 1, 0) = 3, x(0, 1, 1) = 4;
    REQUIRE(ops::spatial_mean(g.constant(x)).item() == 2.5);
    const auto y = a.forward(g, g.constant(x)).value();
    REQUIRE(y(0, 0, 0) == 3.5);
    REQUIRE(y(0, 0, 1) == 4.5);
    REQUIRE(y(0, 1, 0) == 5.5);
    REQUIRE(y(0, 1, 1) == 6.5);
  }
  SECTION("pooling a constant map returns the constant") {
    Tensor<double> x(3, 5, 7);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 7; ++j) x(c, i, j) = 0.25 * (c + 1);
    const auto z = ops::spatial_mean(g.constant(x)).value();
    for (int c = 0; c < 3; ++c) REQUIRE(z[c] == 0.25 * (c + 1));
  }
  SECTION("zero transform leaves the input unchanged") {
    nn::GCA<double> a("a", 3);
    const auto x = test::random_tensor({3, 4, 6}, 90);
    REQUIRE(max_abs_diff(a.forward(g, g.constant(x)).value(), x) == 0.0);
  }
  SECTION("per-channel mean shifts by exactly z'") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      nn::GCA<double> a("a", 4);
      randomize_all(a, 100 + seed);
      const auto x = test::random_tensor({4, 5 + static_cast<int>(seed), 6}, 200 + seed);
      const auto zp = test::conv_oracle(ops::spatial_mean(g.constant(x)).value(), a.fc.weight.value, &a.fc.bias.value, 1);
      const auto shift = sub_t(ops::spatial_mean(a.forward(g, g.constant(x))).value(), ops::spatial_mean(g.constant(x)).value());
      for (int c = 0; c < 4; ++c) REQUIRE(std::abs(shift[c] - zp[c]) <= 1e-6);
    }
  }
  SECTION("channel mismatch throws") {
    nn::GCA<double> a("a", 2);
    REQUIRE_THROWS_AS(a.forward(g, g.constant(Tensor<double>(3, 4, 4))), std::invalid_argument);
  }
}

TEST_CASE("blocks preserve spatial extents", "[blocks][property]") {
  Graph<double> g(false);
  for (auto [h, w] : {std::pair{3, 3}, {4, 7}, {9, 5}, {16, 16}}) {
    CAPTURE(h, w);
    const auto x = test::random_tensor({2, h, w}, static_cast<std::uint64_t>(h * 31 + w));
    nn::SCL<double> s("s", 2, 5);
    nn::DResBlock<double> d("d", 2, 4);
    nn::SResBlock<double> r("r", 2);
    nn::GCA<double> a("a", 2);
    REQUIRE(s.forward(g, g.constant(x)).shape() == Shape{5, h, w});
    const auto o = d.forward(g, g.constant(x));
    REQUIRE(o.global.shape() == Shape{4, h, w});
    REQUIRE(o.edge.shape() == Shape{4, h, w});
    REQUIRE(r.forward(g, g.constant(x)).shape() == x.shape());
    REQUIRE(a.forward(g, g.constant(x)).shape() == x.shape());
  }
}


TEST_CASE("block gradients match central differences in double precision", "[blocks][gradcheck]") {
  for (const auto& c : test::kBlockCases) {
    CAPTURE(c.block, nn::describe(c.comps));
    auto h = test::make_harness<double>(c.block, c.comps, 300);
    const auto r = test::grad_check(
        test::harness_params(h, c.block), [&](Graph<double>& g) { return test::harness_loss(h, c.block, g); }, 32, 17);
    CAPTURE(r.worst);
    REQUIRE(r.probes >= 20);
    REQUIRE(r.max_rel <= 1e-4);
  }
}

TEST_CASE("single-precision block gradients agree with double precision", "[blocks][gradcheck]") {
  for (const auto& c : test::kBlockCases) {
    CAPTURE(c.block, nn::describe(c.comps));
    auto hd = test::make_harness<double>(c.block, c.comps, 400);
    auto hf = test::make_harness<float>(c.block, c.comps, 400);
    const auto pd = test::harness_params(hd, c.block);
    const auto pf = test::harness_params(hf, c.block);
    {
      Graph<double> g;
      g.backward(test::harness_loss(hd, c.block, g));
    }
    {
      Graph<float> g;
      g.backward(test::harness_loss(hf, c.block, g));
    }
    REQUIRE(pd.size() == pf.size());
    double worst = 0;
    for (std::size_t k = 0; k < pd.size(); ++k)
      for (std::size_t i = 0; i < pd[k]->grad.size(); ++i) {
        const double a = pd[k]->grad[i], b = pf[k]->grad[i];
        worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}));
      }
    REQUIRE(worst <= 1e-2);
  }
}
