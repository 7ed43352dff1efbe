// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "usrnet/simd/kernels.hpp"

namespace usrnet::ops {
namespace {

template <class T>
Tensor<T>* grad_of(const std::shared_ptr<ad::Node<T>>& n) {
  return (n && n->requires_grad) ? &n->grad_buffer() : nullptr;
}

int kernel_extent(const Shape& weight) {
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(weight.w))));
  if (k * k != weight.w || k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd and square");
  return k;
}

// Unfolds x into rows of (channel, ky, kx) and columns of output positions.
template <class T>
void im2col(const Tensor<T>& x, int k, int dilation, std::vector<T>& col) {
  const int c_in = x.channels(), h = x.height(), w = x.width();
  const std::size_t hw = x.shape().plane();
  col.assign(static_cast<std::size_t>(c_in) * k * k * hw, T(0));
  const int half = k / 2;
  for (int c = 0; c < c_in; ++c) {
    const T* src = x.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      const int dy = (ky - half) * dilation;
      for (int kx = 0; kx < k; ++kx) {
        const int dx = (kx - half) * dilation;
        T* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        if (x0 >= x1) continue;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, dst + y * w + x0);
        }
      }
    }
  }
}

template <class T>
void col2im_add(const std::vector<T>& col, int k, int dilation, Tensor<T>& dx) {
  const int c_in = dx.channels(), h = dx.height(), w = dx.width();
  const std::size_t hw = dx.shape().plane();
  const int half = k / 2;
  for (int c = 0; c < c_in; ++c) {
    T* dst = dx.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      const int dy = (ky - half) * dilation;
      for (int kx = 0; kx < k; ++kx) {
        const int ddx = (kx - half) * dilation;
        const T* src = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
        if (x0 >= x1) continue;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          T* drow = dst + sy * w + ddx;
          const T* srow = src + y * w;
          for (int xx = x0; xx < x1; ++xx) drow[xx] += srow[xx];
        }
      }
    }
  }
}

template <class T>
Tensor<T> binary(const Var<T>& a, const Var<T>& b, const char* what, T (*fn)(T, T)) {
  require_same_shape(a.shape(), b.shape(), what);
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(pa[i], pb[i]);
  return out;
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int dilation) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int k = kernel_extent(ws);
  const int c_out = ws.c, c_in = ws.h;
  if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");
  if (xs.c != c_in) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                                std::to_string(c_in));
  }
  if (bias.defined() && bias.shape().size() != static_cast<std::size_t>(c_out)) {
    throw std::invalid_argument("conv2d: bias length must equal output channels");
  }
  const int hw = xs.h * xs.w;
  const int depth = c_in * k * k;

  Tensor<T> out(c_out, xs.h, xs.w);
  std::vector<T> col;
  const T* unfolded = x.value().data();
  if (k > 1) {
    im2col(x.value(), k, dilation, col);
    unfolded = col.data();
  }
  simd::gemm_nn<T>(c_out, hw, depth, weight.value().data(), depth, unfolded, hw, out.data(), hw, false);
  if (bias.defined()) {
    for (int o = 0; o < c_out; ++o) {
      const T b = bias.value()[o];
      T* row = out.channel(o);
      for (int i = 0; i < hw; ++i) row[i] += b;
    }
  }

  return x.graph().record(std::move(out), {x, weight, bias}, [k, dilation, c_out, depth, hw](ad::Node<T>& self) {
    const Tensor<T>& xv = self.inputs[0]->val();
    const Tensor<T>& wv = self.inputs[1]->val();
    const T* dout = self.grad.data();

    std::vector<T> col;
    const T* unfolded = xv.data();
    if (k > 1 && (self.inputs[1]->requires_grad)) {
      im2col(xv, k, dilation, col);
      unfolded = col.data();
    }
    if (auto* gw = grad_of(self.inputs[1])) {
      simd::gemm_nt<T>(c_out, depth, hw, dout, hw, unfolded, hw, gw->data(), depth, true);
    }
    if (auto* gb = grad_of(self.inputs[2])) {
      for (int o = 0; o < c_out; ++o) {
        T s = T(0);
        const T* row = dout + static_cast<std::size_t>(o) * hw;
        for (int i = 0; i < hw; ++i) s += row[i];
        (*gb)[o] += s;
      }
    }
    if (auto* gx = grad_of(self.inputs[0])) {
      std::vector<T> wt(static_cast<std::size_t>(depth) * c_out);
      for (int o = 0; o < c_out; ++o)
        for (int d = 0; d < depth; ++d) wt[static_cast<std::size_t>(d) * c_out + o] = wv[static_cast<std::size_t>(o) * depth + d];
      if (k == 1) {
        simd::gemm_nn<T>(depth, hw, c_out, wt.data(), c_out, dout, hw, gx->data(), hw, true);
      } else {
        std::vector<T> dcol(static_cast<std::size_t>(depth) * hw);
        simd::gemm_nn<T>(depth, hw, c_out, wt.data(), c_out, dout, hw, dcol.data(), hw, false);
        col2im_add(dcol, k, dilation, *gx);
      }
    }
  });
}

template <class T>
Var<T> laplacian(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.h < 3 || s.w < 3) throw std::invalid_argument("laplacian: spatial extent must be at least 3x3");
  return laplacian_any(x);
}

template <class T>
Var<T> laplacian_any(const Var<T>& x) {
  const Shape s = x.shape();
  const int h = s.h, w = s.w;
  Tensor<T> out(s);
  for (int c = 0; c < s.c; ++c) {
    const T* v = x.value().channel(c);
    T* o = out.channel(c);
    for (int y = 0; y < h; ++y) {
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
      for (int xx = 0; xx < w; ++xx) {
        const int xl = std::max(xx - 1, 0), xr = std::min(xx + 1, w - 1);
        o[y * w + xx] = T(4) * v[y * w + xx] - v[yu * w + xx] - v[yd * w + xx] - v[y * w + xl] - v[y * w + xr];
      }
    }
  }
  return x.graph().record(std::move(out), {x}, [h, w](ad::Node<T>& self) {
    Tensor<T>* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    for (int c = 0; c < self.grad.channels(); ++c) {
      const T* g = self.grad.channel(c);
      T* d = gx->channel(c);
      for (int y = 0; y < h; ++y) {
        const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        for (int xx = 0; xx < w; ++xx) {
          const int xl = std::max(xx - 1, 0), xr = std::min(xx + 1, w - 1);
          const T gv = g[y * w + xx];
          d[y * w + xx] += T(4) * gv;
          d[yu * w + xx] -= gv;
          d[yd * w + xx] -= gv;
          d[y * w + xl] -= gv;
          d[y * w + xr] -= gv;
        }
      }
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = binary<T>(a, b, "add", [](T u, T v) { return u + v; });
  return a.graph().record(std::move(out), {a, b}, [](ad::Node<T>& self) {
    for (int i = 0; i < 2; ++i)
      if (auto* g = grad_of(self.inputs[i])) simd::axpy<T>(g->size(), T(1), self.grad.data(), g->data());
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = binary<T>(a, b, "sub", [](T u, T v) { return u - v; });
  return a.graph().record(std::move(out), {a, b}, [](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0])) simd::axpy<T>(g->size(), T(1), self.grad.data(), g->data());
    if (auto* g = grad_of(self.inputs[1])) simd::axpy<T>(g->size(), T(-1), self.grad.data(), g->data());
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = binary<T>(a, b, "mul", [](T u, T v) { return u * v; });
  return a.graph().record(std::move(out), {a, b}, [](ad::Node<T>& self) {
    const Tensor<T>& av = self.inputs[0]->val();
    const Tensor<T>& bv = self.inputs[1]->val();
    if (auto* g = grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = grad_of(self.inputs[1]))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = binary<T>(a, b, "div", [](T u, T v) { return u / v; });
  return a.graph().record(std::move(out), {a, b}, [](ad::Node<T>& self) {
    const Tensor<T>& av = self.inputs[0]->val();
    const Tensor<T>& bv = self.inputs[1]->val();
    if (auto* g = grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] / bv[i];
    if (auto* g = grad_of(self.inputs[1]))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return a.graph().record(std::move(out), {a}, [s](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0])) simd::axpy<T>(g->size(), s, self.grad.data(), g->data());
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
  return a.graph().record(std::move(out), {a}, [](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0])) simd::axpy<T>(g->size(), T(1), self.grad.data(), g->data());
  });
}

template <class T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  const int c = s.c;
  if (gamma.shape().size() != static_cast<std::size_t>(c) || beta.shape().size() != static_cast<std::size_t>(c)) {
    throw std::invalid_argument("layer_norm_channels: gain/offset length must equal channels");
  }
  const Tensor<T>& xv = x.value();
  std::vector<T> mean(hw, T(0)), inv(hw, T(0));
  for (int ch = 0; ch < c; ++ch) {
    const T* p = xv.channel(ch);
    for (std::size_t i = 0; i < hw; ++i) mean[i] += p[i];
  }
  for (auto& m : mean) m /= T(c);
  for (int ch = 0; ch < c; ++ch) {
    const T* p = xv.channel(ch);
    for (std::size_t i = 0; i < hw; ++i) {
      const T d = p[i] - mean[i];
      inv[i] += d * d;
    }
  }
  for (auto& v : inv) v = T(1) / std::sqrt(v / T(c) + eps);

  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (int ch = 0; ch < c; ++ch) {
    const T* p = xv.channel(ch);
    T* xh = xhat.channel(ch);
    T* o = out.channel(ch);
    const T g = gamma.value()[ch], b = beta.value()[ch];
    for (std::size_t i = 0; i < hw; ++i) {
      xh[i] = (p[i] - mean[i]) * inv[i];
      o[i] = g * xh[i] + b;
    }
  }

  return x.graph().record(std::move(out), {x, gamma, beta},
                          [xhat = std::move(xhat), inv = std::move(inv), c, hw](ad::Node<T>& self) {
                            const Tensor<T>& g = self.grad;
                            const Tensor<T>& gam = self.inputs[1]->val();
                            if (auto* gg = grad_of(self.inputs[1])) {
                              for (int ch = 0; ch < c; ++ch)
                                (*gg)[ch] += simd::dot<T>(hw, g.channel(ch), xhat.channel(ch));
                            }
                            if (auto* gb = grad_of(self.inputs[2])) {
                              for (int ch = 0; ch < c; ++ch) {
                                T sacc = T(0);
                                const T* gp = g.channel(ch);
                                for (std::size_t i = 0; i < hw; ++i) sacc += gp[i];
                                (*gb)[ch] += sacc;
                              }
                            }
                            if (auto* gx = grad_of(self.inputs[0])) {
                              std::vector<T> sum_d(hw, T(0)), sum_dx(hw, T(0));
                              for (int ch = 0; ch < c; ++ch) {
                                const T* gp = g.channel(ch);
                                const T* xh = xhat.channel(ch);
                                const T gm = gam[ch];
                                for (std::size_t i = 0; i < hw; ++i) {
                                  const T d = gp[i] * gm;
                                  sum_d[i] += d;
                                  sum_dx[i] += d * xh[i];
                                }
                              }
                              const T inv_c = T(1) / T(c);
                              for (int ch = 0; ch < c; ++ch) {
                                const T* gp = g.channel(ch);
                                const T* xh = xhat.channel(ch);
                                T* dx = gx->channel(ch);
                                const T gm = gam[ch];
                                for (std::size_t i = 0; i < hw; ++i) {
                                  dx[i] += inv[i] * (gp[i] * gm - inv_c * (sum_d[i] + xh[i] * sum_dx[i]));
                                }
                              }
                            }
                          });
}

template <class T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  const Shape s = x.shape();
  if (slope.shape().size() != static_cast<std::size_t>(s.c)) throw std::invalid_argument("prelu: one slope per channel");
  const std::size_t hw = s.plane();
  Tensor<T> out(s);
  for (int ch = 0; ch < s.c; ++ch) {
    const T a = slope.value()[ch];
    const T* p = x.value().channel(ch);
    T* o = out.channel(ch);
    for (std::size_t i = 0; i < hw; ++i) o[i] = p[i] > T(0) ? p[i] : a * p[i];
  }
  return x.graph().record(std::move(out), {x, slope}, [hw](ad::Node<T>& self) {
    const Tensor<T>& xv = self.inputs[0]->val();
    const Tensor<T>& av = self.inputs[1]->val();
    auto* gx = grad_of(self.inputs[0]);
    auto* ga = grad_of(self.inputs[1]);
    for (int ch = 0; ch < xv.channels(); ++ch) {
      const T* p = xv.channel(ch);
      const T* g = self.grad.channel(ch);
      T acc = T(0);
      for (std::size_t i = 0; i < hw; ++i) {
        const bool pos = p[i] > T(0);
        if (gx != nullptr) gx->channel(ch)[i] += pos ? g[i] : av[ch] * g[i];
        if (!pos) acc += g[i] * p[i];
      }
      if (ga != nullptr) (*ga)[ch] += acc;
    }
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.value()[i], T(0));
  return x.graph().record(std::move(out), {x}, [](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0])) {
      const Tensor<T>& xv = self.inputs[0]->val();
      for (std::size_t i = 0; i < g->size(); ++i)
        if (xv[i] > T(0)) (*g)[i] += self.grad[i];
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.value()[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return x.graph().record(std::move(out), {x}, [](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0])) {
      const Tensor<T>& y = self.value;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i] * (T(1) - y[i]);
    }
  });
}

template <class T>
Var<T> max_pool2(const Var<T>& x) {
  const Shape s = x.shape();
  const int oh = (s.h + 1) / 2, ow = (s.w + 1) / 2;
  Tensor<T> out(s.c, oh, ow);
  std::vector<std::uint32_t> arg(out.size());
  for (int ch = 0; ch < s.c; ++ch) {
    const T* p = x.value().channel(ch);
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t best_i = 0;
        for (int dy = 0; dy < 2; ++dy) {
          const int sy = 2 * y + dy;
          if (sy >= s.h) break;
          for (int dx = 0; dx < 2; ++dx) {
            const int sx = 2 * xx + dx;
            if (sx >= s.w) break;
            const T v = p[sy * s.w + sx];
            if (v > best) {
              best = v;
              best_i = static_cast<std::uint32_t>(sy * s.w + sx);
            }
          }
        }
        const std::size_t oi = (static_cast<std::size_t>(ch) * oh + y) * ow + xx;
        out[oi] = best;
        arg[oi] = best_i;
      }
    }
  }
  return x.graph().record(std::move(out), {x}, [arg = std::move(arg), oh, ow](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int ch = 0; ch < self.grad.channels(); ++ch) {
      T* d = gx->channel(ch);
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t oi = static_cast<std::size_t>(ch) * plane + i;
        d[arg[oi]] += self.grad[oi];
      }
    }
  });
}

template <class T>
Var<T> avg_pool2(const Var<T>& x) {
  const Shape s = x.shape();
  const int oh = (s.h + 1) / 2, ow = (s.w + 1) / 2;
  Tensor<T> out(s.c, oh, ow);
  auto count = [s](int y, int xx) { return T((std::min(2 * y + 2, s.h) - 2 * y) * (std::min(2 * xx + 2, s.w) - 2 * xx)); };
  for (int ch = 0; ch < s.c; ++ch) {
    const T* p = x.value().channel(ch);
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) out(ch, y / 2, xx / 2) += p[y * s.w + xx];
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) out(ch, y, xx) /= count(y, xx);
  }
  return x.graph().record(std::move(out), {x}, [s, count](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    for (int ch = 0; ch < s.c; ++ch)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) (*gx)(ch, y, xx) += self.grad(ch, y / 2, xx / 2) / count(y / 2, xx / 2);
  });
}

template <class T>
Var<T> upsample2(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(s.c, 2 * s.h, 2 * s.w);
  for (int ch = 0; ch < s.c; ++ch)
    for (int y = 0; y < 2 * s.h; ++y)
      for (int xx = 0; xx < 2 * s.w; ++xx) out(ch, y, xx) = x.value()(ch, y / 2, xx / 2);
  return x.graph().record(std::move(out), {x}, [s](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    for (int ch = 0; ch < s.c; ++ch)
      for (int y = 0; y < 2 * s.h; ++y)
        for (int xx = 0; xx < 2 * s.w; ++xx) (*gx)(ch, y / 2, xx / 2) += self.grad(ch, y, xx);
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: nothing to concatenate");
  const Shape first = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.shape().h != first.h || p.shape().w != first.w) {
      throw std::invalid_argument("concat_channels: spatial mismatch " + to_string(p.shape()) + " vs " + to_string(first));
    }
    total += p.shape().c;
  }
  Tensor<T> out(total, first.h, first.w);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return parts.front().graph().record(std::move(out), parts, [](ad::Node<T>& self) {
    std::size_t off = 0;
    for (const auto& in : self.inputs) {
      const std::size_t n = in->val().size();
      if (auto* g = grad_of(in)) simd::axpy<T>(n, T(1), self.grad.data() + off, g->data());
      off += n;
    }
  });
}

template <class T>
Var<T> spatial_mean(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  Tensor<T> out(s.c, 1, 1);
  for (int ch = 0; ch < s.c; ++ch) {
    const T* p = x.value().channel(ch);
    T acc = T(0);
    for (std::size_t i = 0; i < hw; ++i) acc += p[i];
    out[static_cast<std::size_t>(ch)] = acc / T(hw);
  }
  return x.graph().record(std::move(out), {x}, [hw](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    for (int ch = 0; ch < gx->channels(); ++ch) {
      const T g = self.grad[static_cast<std::size_t>(ch)] / T(hw);
      T* d = gx->channel(ch);
      for (std::size_t i = 0; i < hw; ++i) d[i] += g;
    }
  });
}

template <class T>
Var<T> broadcast_add(const Var<T>& x, const Var<T>& z) {
  const Shape s = x.shape();
  if (z.shape().size() != static_cast<std::size_t>(s.c)) throw std::invalid_argument("broadcast_add: one value per channel");
  const std::size_t hw = s.plane();
  Tensor<T> out = x.value();
  for (int ch = 0; ch < s.c; ++ch) {
    const T v = z.value()[static_cast<std::size_t>(ch)];
    T* o = out.channel(ch);
    for (std::size_t i = 0; i < hw; ++i) o[i] += v;
  }
  return x.graph().record(std::move(out), {x, z}, [hw](ad::Node<T>& self) {
    if (auto* gx = grad_of(self.inputs[0])) simd::axpy<T>(gx->size(), T(1), self.grad.data(), gx->data());
    if (auto* gz = grad_of(self.inputs[1])) {
      for (int ch = 0; ch < self.grad.channels(); ++ch) {
        const T* g = self.grad.channel(ch);
        T acc = T(0);
        for (std::size_t i = 0; i < hw; ++i) acc += g[i];
        (*gz)[static_cast<std::size_t>(ch)] += acc;
      }
    }
  });
}

template <class T>
Var<T> reflect_pad(const Var<T>& x, int bottom, int right) {
  const Shape s = x.shape();
  if (bottom < 0 || right < 0 || bottom >= s.h || right >= s.w) {
    throw std::invalid_argument("reflect_pad: padding must be smaller than the image extent");
  }
  const int oh = s.h + bottom, ow = s.w + right;
  auto src_y = [s](int y) { return y < s.h ? y : 2 * (s.h - 1) - y; };
  auto src_x = [s](int xx) { return xx < s.w ? xx : 2 * (s.w - 1) - xx; };
  Tensor<T> out(s.c, oh, ow);
  for (int ch = 0; ch < s.c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) out(ch, y, xx) = x.value()(ch, src_y(y), src_x(xx));
  return x.graph().record(std::move(out), {x}, [s, oh, ow, src_y, src_x](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    for (int ch = 0; ch < s.c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) (*gx)(ch, src_y(y), src_x(xx)) += self.grad(ch, y, xx);
  });
}

template <class T>
Var<T> crop(const Var<T>& x, int top, int left, int height, int width) {
  const Shape s = x.shape();
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > s.h || left + width > s.w) {
    throw std::invalid_argument("crop: window outside " + to_string(s));
  }
  Tensor<T> out(s.c, height, width);
  for (int ch = 0; ch < s.c; ++ch)
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx) out(ch, y, xx) = x.value()(ch, top + y, left + xx);
  return x.graph().record(std::move(out), {x}, [top, left, height, width](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    for (int ch = 0; ch < self.grad.channels(); ++ch)
      for (int y = 0; y < height; ++y)
        for (int xx = 0; xx < width; ++xx) (*gx)(ch, top + y, left + xx) += self.grad(ch, y, xx);
  });
}

template <class T>
Var<T> luminance(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.c != 3) throw std::invalid_argument("luminance: expected 3 channels, got " + std::to_string(s.c));
  constexpr T kR = T(0.299), kG = T(0.587), kB = T(0.114);
  const std::size_t hw = s.plane();
  Tensor<T> out(1, s.h, s.w);
  const T* r = x.value().channel(0);
  const T* g = x.value().channel(1);
  const T* b = x.value().channel(2);
  for (std::size_t i = 0; i < hw; ++i) out[i] = kR * r[i] + kG * g[i] + kB * b[i];
  return x.graph().record(std::move(out), {x}, [hw](ad::Node<T>& self) {
    auto* gx = grad_of(self.inputs[0]);
    if (gx == nullptr) return;
    simd::axpy<T>(hw, kR, self.grad.data(), gx->channel(0));
    simd::axpy<T>(hw, kG, self.grad.data(), gx->channel(1));
    simd::axpy<T>(hw, kB, self.grad.data(), gx->channel(2));
  });
}

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean_abs_diff: empty input");
  Tensor<T> out(1, 1, 1);
  out[0] = simd::sum_abs_diff<T>(n, a.value().data(), b.value().data()) / T(n);
  return a.graph().record(std::move(out), {a, b}, [n](ad::Node<T>& self) {
    const Tensor<T>& av = self.inputs[0]->val();
    const Tensor<T>& bv = self.inputs[1]->val();
    const T g = self.grad[0] / T(n);
    auto* ga = grad_of(self.inputs[0]);
    auto* gb = grad_of(self.inputs[1]);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = av[i] - bv[i];
      const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (ga != nullptr) (*ga)[i] += sg;
      if (gb != nullptr) (*gb)[i] -= sg;
    }
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  Tensor<T> out(1, 1, 1);
  for (T v : x.value().span()) out[0] += v;
  return x.graph().record(std::move(out), {x}, [](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0]))
      for (auto& v : g->span()) v += self.grad[0];
  });
}

template <class T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
  require_same_shape(x.shape(), w.shape(), "weighted_sum");
  Tensor<T> out(1, 1, 1);
  out[0] = simd::dot<T>(w.size(), x.value().data(), w.data());
  return x.graph().record(std::move(out), {x}, [w](ad::Node<T>& self) {
    if (auto* g = grad_of(self.inputs[0])) simd::axpy<T>(g->size(), self.grad[0], w.data(), g->data());
  });
}

#define USRNET_INSTANTIATE(T)                                                         \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int);        \
  template Var<T> laplacian<T>(const Var<T>&);                                        \
  template Var<T> laplacian_any<T>(const Var<T>&);                                    \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> scale<T>(const Var<T>&, T);                                         \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                    \
  template Var<T> layer_norm_channels<T>(const Var<T>&, const Var<T>&, const Var<T>&, T); \
  template Var<T> prelu<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> relu<T>(const Var<T>&);                                             \
  template Var<T> sigmoid<T>(const Var<T>&);                                          \
  template Var<T> max_pool2<T>(const Var<T>&);                                        \
  template Var<T> avg_pool2<T>(const Var<T>&);                                        \
  template Var<T> upsample2<T>(const Var<T>&);                                        \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                     \
  template Var<T> spatial_mean<T>(const Var<T>&);                                     \
  template Var<T> broadcast_add<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> reflect_pad<T>(const Var<T>&, int, int);                            \
  template Var<T> crop<T>(const Var<T>&, int, int, int, int);                         \
  template Var<T> luminance<T>(const Var<T>&);                                        \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> sum<T>(const Var<T>&);                                              \
  template Var<T> weighted_sum<T>(const Var<T>&, const Tensor<T>&);

USRNET_INSTANTIATE(float)
USRNET_INSTANTIATE(double)
#undef USRNET_INSTANTIATE

}  // namespace usrnet::ops
