// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/nn_blocks.hpp"

#include <cmath>
#include <random>

namespace usrnet::nn {

std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <class T>
void init_parameter(Parameter<T>& p, std::uint64_t seed) {
  if (ends_with(p.name, ".weight")) {
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < p.dims.size(); ++i) fan_in *= p.dims[i];
    // Residual-branch outputs and prediction heads start small.
    const double gain = ends_with(p.name, ".conv2.weight") || ends_with(p.name, ".head.weight") ? 0.1 : 1.0;
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
    std::mt19937_64 rng(seed ^ name_hash(p.name));
    for (auto& v : p.value.span()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = static_cast<T>(bound * (2.0 * u - 1.0));
    }
  } else if (ends_with(p.name, ".gamma")) {
    p.value.fill(T(1));
  } else if (ends_with(p.name, ".slope")) {
    p.value.fill(T(0.25));
  } else {
    p.value.fill(T(0));
  }
  p.zero_grad();
}

std::string describe(const DResComponents& c) {
  std::string s = "scl";
  if (c.frequency_paths) {
    s += c.dilated ? "+K_d" : "+K_s";
    if (c.laplacian) s += "+K_L";
  }
  return s;
}

template <class T>
Conv2d<T>::Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int dilation)
    : weight(name + ".weight", {out_ch, in_ch, kernel, kernel}, Shape{out_ch, in_ch, kernel * kernel}),
      bias(name + ".bias", {out_ch}, Shape{out_ch, 1, 1}),
      in_(in_ch),
      out_(out_ch),
      k_(kernel),
      dilation_(dilation) {
  if (kernel % 2 == 0 || kernel < 1) throw std::invalid_argument(name + ": kernel size must be odd");
  if (dilation < 1) throw std::invalid_argument(name + ": dilation must be >= 1");
}

template <class T>
Var<T> Conv2d<T>::forward(Graph<T>& g, const Var<T>& x) {
  return ops::conv2d(x, g.parameter(weight), g.parameter(bias), dilation_);
}

template <class T>
LayerNorm<T>::LayerNorm(const std::string& name, int channels)
    : gamma(name + ".gamma", {channels}, Shape{channels, 1, 1}), beta(name + ".beta", {channels}, Shape{channels, 1, 1}) {
  gamma.value.fill(T(1));
}

template <class T>
Var<T> LayerNorm<T>::forward(Graph<T>& g, const Var<T>& x) {
  return ops::layer_norm_channels(x, g.parameter(gamma), g.parameter(beta));
}

template <class T>
PReLU<T>::PReLU(const std::string& name, int channels) : slope(name + ".slope", {channels}, Shape{channels, 1, 1}) {
  slope.value.fill(T(0.25));
}

template <class T>
Var<T> PReLU<T>::forward(Graph<T>& g, const Var<T>& x) {
  return ops::prelu(x, g.parameter(slope));
}

template <class T>
SCL<T>::SCL(const std::string& name, int in_ch, int out_ch, int kernel, int dilation)
    : conv(name + ".conv", in_ch, out_ch, kernel, dilation), norm(name + ".norm", out_ch), act(name + ".act", out_ch) {}

template <class T>
Var<T> SCL<T>::forward(Graph<T>& g, const Var<T>& x) {
  if (x.shape().c != conv.in_channels()) {
    throw std::invalid_argument("SCL '" + conv.weight.name + "': expected " + std::to_string(conv.in_channels()) +
                                " input channels, got " + std::to_string(x.shape().c));
  }
  Var<T> y = conv.forward(g, x);
  if (bypass_norm_act) return y;
  return act.forward(g, norm.forward(g, y));
}

template <class T>
void SCL<T>::collect(ParamList<T>& out) {
  conv.collect(out);
  norm.collect(out);
  act.collect(out);
}

template <class T>
DResBlock<T>::DResBlock(const std::string& name, int in_ch, int out_ch, DResComponents components, int dilation_rate)
    : standard(name + ".standard", in_ch, out_ch), fuse(name + ".fuse", out_ch, out_ch), edge(name + ".edge", out_ch, out_ch),
      components_(components) {
  if (!components.frequency_paths && (components.laplacian || components.dilated)) {
    // Without frequency paths the other switches have nothing to act on.
    components_.laplacian = false;
    components_.dilated = false;
  }
  const int rate = components_.dilated ? dilation_rate : 1;
  if (components_.frequency_paths) high = Conv2d<T>(name + ".high", in_ch, out_ch, 3, rate);
  if (components_.frequency_paths && components_.laplacian) low = Conv2d<T>(name + ".low", in_ch, out_ch, 3, rate);
}

template <class T>
DResPaths<T> DResBlock<T>::paths(Graph<T>& g, const Var<T>& x) {
  if (x.shape().c != standard.conv.in_channels()) {
    throw std::invalid_argument("DResBlock: expected " + std::to_string(standard.conv.in_channels()) +
                                " input channels, got " + std::to_string(x.shape().c));
  }
  DResPaths<T> p;
  p.standard = standard.forward(g, x);
  if (components_.frequency_paths) {
    if (components_.laplacian) {
      Var<T> lap = ops::laplacian_any(x);
      p.high = high.forward(g, lap);
      p.low = low.forward(g, ops::sub(x, lap));
    } else {
      p.high = high.forward(g, x);
    }
  }
  return p;
}

template <class T>
Var<T> DResBlock<T>::fused_input(const DResPaths<T>& p) {
  Var<T> s = p.standard;
  if (p.high.defined()) s = ops::add(s, p.high);
  if (p.low.defined()) s = ops::add(s, p.low);
  return s;
}

template <class T>
DResOutput<T> DResBlock<T>::forward(Graph<T>& g, const Var<T>& x) {
  DResPaths<T> p = paths(g, x);
  DResOutput<T> out;
  out.global = fuse.forward(g, fused_input(p));
  out.edge = edge.forward(g, p.high.defined() ? p.high : p.standard);
  return out;
}

template <class T>
void DResBlock<T>::collect(ParamList<T>& out) {
  if (components_.frequency_paths) high.collect(out);
  if (components_.frequency_paths && components_.laplacian) low.collect(out);
  standard.collect(out);
  fuse.collect(out);
  edge.collect(out);
}

template <class T>
SResBlock<T>::SResBlock(const std::string& name, int channels)
    : conv1(name + ".conv1", channels, channels, 3),
      norm(name + ".norm", channels),
      act(name + ".act", channels),
      conv2(name + ".conv2", channels, channels, 3) {}

template <class T>
Var<T> SResBlock<T>::forward(Graph<T>& g, const Var<T>& x) {
  if (x.shape().c != conv1.in_channels()) {
    throw std::invalid_argument("SResBlock: expected " + std::to_string(conv1.in_channels()) + " channels, got " +
                                std::to_string(x.shape().c));
  }
  Var<T> r = conv2.forward(g, act.forward(g, norm.forward(g, conv1.forward(g, x))));
  return ops::add(x, r);
}

template <class T>
void SResBlock<T>::collect(ParamList<T>& out) {
  conv1.collect(out);
  norm.collect(out);
  act.collect(out);
  conv2.collect(out);
}

template <class T>
GCA<T>::GCA(const std::string& name, int channels) : fc(name + ".fc", channels, channels, 1) {}

template <class T>
Var<T> GCA<T>::forward(Graph<T>& g, const Var<T>& x) {
  if (x.shape().c != fc.in_channels()) {
    throw std::invalid_argument("GCA: expected " + std::to_string(fc.in_channels()) + " channels, got " +
                                std::to_string(x.shape().c));
  }
  Var<T> z = ops::spatial_mean(x);
  return ops::broadcast_add(x, fc.forward(g, z));
}

#define USRNET_INSTANTIATE(T)                                 \
  template void init_parameter<T>(Parameter<T>&, std::uint64_t); \
  template class Conv2d<T>;                                   \
  template class LayerNorm<T>;                                \
  template class PReLU<T>;                                    \
  template class SCL<T>;                                      \
  template class DResBlock<T>;                                \
  template class SResBlock<T>;                                \
  template class GCA<T>;

USRNET_INSTANTIATE(float)
USRNET_INSTANTIATE(double)
#undef USRNET_INSTANTIATE

}  // namespace usrnet::nn
