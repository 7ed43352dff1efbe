// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Trainable building blocks. Each block owns its parameters, names them under
// a dotted prefix, and appends pointers to them in collect(). Forward methods
// build onto a caller-supplied graph; with a no-grad graph they are read-only
// with respect to the parameters.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usrnet/autodiff.hpp"
#include "usrnet/ops.hpp"

namespace usrnet::nn {

using ad::Graph;
using ad::Parameter;
using ad::Var;

template <class T>
using ParamList = std::vector<Parameter<T>*>;

/// Fills one parameter from a stream seeded by (seed, name), so a parameter's
/// initial value does not depend on which other parameters exist.
///   *.weight  uniform(+-sqrt(6 / fan_in))
///   *.gamma   1
///   *.slope   0.25
///   other     0
template <class T>
void init_parameter(Parameter<T>& p, std::uint64_t seed);

template <class T>
void init_parameters(const ParamList<T>& params, std::uint64_t seed) {
  for (auto* p : params) init_parameter(*p, seed);
}

std::uint64_t name_hash(std::string_view name);

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int dilation = 1);

  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }

  [[nodiscard]] int in_channels() const { return in_; }
  [[nodiscard]] int out_channels() const { return out_; }
  [[nodiscard]] int kernel() const { return k_; }
  [[nodiscard]] int dilation() const { return dilation_; }

  Parameter<T> weight;  ///< (out, in, k*k)
  Parameter<T> bias;    ///< (out)

 private:
  int in_ = 0, out_ = 0, k_ = 1, dilation_ = 1;
};

/// Layer normalization across channels at each position.
template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int channels);
  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out) { out.push_back(&gamma); out.push_back(&beta); }

  Parameter<T> gamma;
  Parameter<T> beta;
};

template <class T>
class PReLU {
 public:
  PReLU() = default;
  PReLU(const std::string& name, int channels);
  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out) { out.push_back(&slope); }

  Parameter<T> slope;
};

/// Standard convolutional layer: PReLU(LayerNorm(conv(x) + b)).
template <class T>
class SCL {
 public:
  SCL() = default;
  SCL(const std::string& name, int in_ch, int out_ch, int kernel = 3, int dilation = 1);

  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out);

  Conv2d<T> conv;
  LayerNorm<T> norm;
  PReLU<T> act;
  /// Test hook: when set, forward returns the raw convolution.
  bool bypass_norm_act = false;
};

/// Which parts of the dual residual block are active. The defaults are the
/// full block; the switches reproduce the component ablation.
struct DResComponents {
  /// High/low frequency convolution paths present at all.
  bool frequency_paths = true;
  /// Frequency-path convolutions dilated (otherwise plain 3x3).
  bool dilated = true;
  /// Laplacian split into high and low paths (otherwise a single path).
  bool laplacian = true;

  friend bool operator==(const DResComponents&, const DResComponents&) = default;
};

std::string describe(const DResComponents& c);

template <class T>
struct DResPaths {
  Var<T> high;      ///< dilated conv of Lap(x), or the single frequency path
  Var<T> low;       ///< dilated conv of x - Lap(x); undefined without Laplacian
  Var<T> standard;  ///< SCL(x)
};

template <class T>
struct DResOutput {
  Var<T> global;
  Var<T> edge;
};

/// Dual residual block with a global head and an edge head.
template <class T>
class DResBlock {
 public:
  DResBlock() = default;
  DResBlock(const std::string& name, int in_ch, int out_ch, DResComponents components = {}, int dilation_rate = 2);

  DResPaths<T> paths(Graph<T>& g, const Var<T>& x);
  /// Sum of the active paths, i.e. the input of the fusion layer.
  Var<T> fused_input(const DResPaths<T>& p);
  DResOutput<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out);

  [[nodiscard]] const DResComponents& components() const { return components_; }

  Conv2d<T> high;
  Conv2d<T> low;
  SCL<T> standard;
  SCL<T> fuse;
  SCL<T> edge;

 private:
  DResComponents components_;
};

/// Standard residual block: x + conv2(PReLU(LayerNorm(conv1(x)))).
template <class T>
class SResBlock {
 public:
  SResBlock() = default;
  SResBlock(const std::string& name, int channels);
  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out);

  Conv2d<T> conv1;
  LayerNorm<T> norm;
  PReLU<T> act;
  Conv2d<T> conv2;
};

/// Global context attention: x + fc(spatial_mean(x)) broadcast over positions.
template <class T>
class GCA {
 public:
  GCA() = default;
  GCA(const std::string& name, int channels);
  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out) { fc.collect(out); }

  Conv2d<T> fc;  ///< 1x1, channels -> channels
};

}  // namespace usrnet::nn
