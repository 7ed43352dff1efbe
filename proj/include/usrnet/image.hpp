// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "usrnet/tensor.hpp"

namespace usrnet {

/// Images and per-pixel maps in [0, 1], channel-first (3 x H x W or 1 x H x W).
using Image = Tensor<double>;

/// Reads an 8-bit or 16-bit PNG as 3 x H x W RGB in [0, 1]; grey and palette
/// images are expanded and alpha is dropped. Throws std::runtime_error.
Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG; values are clamped to [0, 1]
/// and quantized as floor(255 * v + 0.5).
void write_png(const std::filesystem::path& path, const Image& image);

/// The 8-bit code write_png() stores for `v`.
inline unsigned char quantize8(double v) {
  const double c = v < 0 ? 0 : (v > 1 ? 1 : v);
  return static_cast<unsigned char>(std::floor(c * 255.0 + 0.5));
}

}  // namespace usrnet
