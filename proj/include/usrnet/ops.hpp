// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op takes and returns ad::Var and
// records its own backward rule on the graph of its first input.

#pragma once

#include <array>
#include <vector>

#include "usrnet/autodiff.hpp"

namespace usrnet::ops {

using ad::Var;

/// The fixed 3x3 Laplacian stamp (centre +4, four neighbours -1).
inline constexpr std::array<double, 9> kLaplacianKernel{0, -1, 0, -1, 4, -1, 0, -1, 0};

/// 2-D convolution with zero "same" padding. `weight` stores (out, in, k*k);
/// `bias` may be undefined. Padding is dilation * (k - 1) / 2 on every side.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int dilation = 1);

/// Per-channel Laplacian with the fixed kernel and replicate padding.
template <class T>
Var<T> laplacian(const Var<T>& x);
/// Same stencil without the 3x3 minimum; replicate padding makes 1- and
/// 2-pixel extents well defined (a 1x1 map gives 0).
template <class T>
Var<T> laplacian_any(const Var<T>& x);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
/// Elementwise a / b.
template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(const Var<T>& a, T s);
template <class T>
Var<T> add_scalar(const Var<T>& a, T s);

/// Normalizes across channels at every spatial position, then applies
/// per-channel gain `gamma` and offset `beta` (both stored as C x 1 x 1).
template <class T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

/// Parametric ReLU with one slope per channel (C x 1 x 1).
template <class T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope);
template <class T>
Var<T> relu(const Var<T>& x);
template <class T>
Var<T> sigmoid(const Var<T>& x);

/// 2x2 max pooling, stride 2, ceil mode (a trailing odd row/column pools alone).
template <class T>
Var<T> max_pool2(const Var<T>& x);
/// 2x2 average pooling, stride 2, ceil mode.
template <class T>
Var<T> avg_pool2(const Var<T>& x);
/// Nearest-neighbour 2x upsampling.
template <class T>
Var<T> upsample2(const Var<T>& x);

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// Mean over the spatial plane of every channel, giving C x 1 x 1.
template <class T>
Var<T> spatial_mean(const Var<T>& x);
/// x + z, with z (C x 1 x 1) broadcast over every position.
template <class T>
Var<T> broadcast_add(const Var<T>& x, const Var<T>& z);

/// Mirror padding that excludes the edge pixel (needs pad < extent).
template <class T>
Var<T> reflect_pad(const Var<T>& x, int bottom, int right);
template <class T>
Var<T> crop(const Var<T>& x, int top, int left, int height, int width);

/// 3-channel to 1-channel luminance with ITU-R BT.601 weights.
template <class T>
Var<T> luminance(const Var<T>& x);

/// Mean of |a - b| over all elements, as a 1x1x1 scalar.
template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);
/// Sum of all elements.
template <class T>
Var<T> sum(const Var<T>& x);
/// Sum of x * w with a constant weight tensor.
template <class T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w);

}  // namespace usrnet::ops
