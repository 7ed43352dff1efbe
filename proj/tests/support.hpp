// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test helpers: seeded random tensors, brute-force convolution and a
// central-difference gradient checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "usrnet/autodiff.hpp"
#include "usrnet/ops.hpp"

namespace usrnet::test {

template <class T = double>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.span()) v = static_cast<T>(u(rng));
  return t;
}

/// Copies the elements out, so a range-for over a temporary tensor is safe.
template <class T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.span().begin(), t.span().end()};
}

template <class T>
void randomize(ad::Parameter<T>& p, std::uint64_t seed, double lo = -0.5, double hi = 0.5) {
  p.value = random_tensor<T>(p.value.shape(), seed, lo, hi);
}

/// Direct zero-padded "same" convolution, weight laid out (out, in, k*k).
inline Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int k,
                                  int dilation = 1) {
  const int out_c = w.channels(), in_c = w.height();
  const int pad = dilation * (k - 1) / 2;
  Tensor<double> y(out_c, x.height(), x.width());
  for (int o = 0; o < out_c; ++o)
    for (int i = 0; i < x.height(); ++i)
      for (int j = 0; j < x.width(); ++j) {
        double s = b != nullptr ? (*b)[static_cast<std::size_t>(o)] : 0.0;
        for (int c = 0; c < in_c; ++c)
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int yy = i + u * dilation - pad, xx = j + v * dilation - pad;
              if (yy < 0 || xx < 0 || yy >= x.height() || xx >= x.width()) continue;
              s += w(o, c, u * k + v) * x(c, yy, xx);
            }
        y(o, i, j) = s;
      }
  return y;
}

/// Per-channel Laplacian with replicate padding, written out directly.
inline Tensor<double> laplacian_oracle(const Tensor<double>& x) {
  Tensor<double> y(x.shape());
  auto at = [&x](int c, int i, int j) {
    i = std::clamp(i, 0, x.height() - 1);
    j = std::clamp(j, 0, x.width() - 1);
    return x(c, i, j);
  };
  for (int c = 0; c < x.channels(); ++c)
    for (int i = 0; i < x.height(); ++i)
      for (int j = 0; j < x.width(); ++j)
        y(c, i, j) = 4 * at(c, i, j) - at(c, i - 1, j) - at(c, i + 1, j) - at(c, i, j - 1) - at(c, i, j + 1);
  return y;
}

struct GradCheck {
  double max_rel = 0;
  int probes = 0;
  std::string worst;
};

/// Compares analytic gradients of `f` with central differences at `probes`
/// random elements drawn across `params`. Relative error uses
/// max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheck grad_check(const std::vector<ad::Parameter<double>*>& params,
                            const std::function<ad::Var<double>(ad::Graph<double>&)>& f, int probes, std::uint64_t seed,
                            double h = 1e-6, double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Graph<double> g;
    g.backward(f(g));
  }
  std::mt19937_64 rng(seed);
  GradCheck out;
  for (int k = 0; k < probes; ++k) {
    auto* p = params[rng() % params.size()];
    const std::size_t i = rng() % p->value.size();
    const double saved = p->value[i];
    p->value[i] = saved + h;
    double fp, fm;
    {
      ad::Graph<double> g(false);
      fp = f(g).item();
    }
    p->value[i] = saved - h;
    {
      ad::Graph<double> g(false);
      fm = f(g).item();
    }
    p->value[i] = saved;
    const double numeric = (fp - fm) / (2 * h);
    const double analytic = p->grad[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > out.max_rel) {
      out.max_rel = rel;
      out.worst = p->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                  " numeric=" + std::to_string(numeric);
    }
    ++out.probes;
  }
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("usrnet_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace usrnet::test
