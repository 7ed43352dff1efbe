// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full-reference quality metrics and evaluation reports.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "usrnet/image.hpp"

namespace usrnet::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) over all channels; kPsnrCap when MSE is zero.
double psnr(const Image& a, const Image& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean SSIM over every fully contained window, computed on BT.601
/// luminance for 3-channel inputs and directly for 1-channel inputs.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int size, double sigma);

/// BT.601 luminance of a 3-channel image (1-channel images pass through).
Image luma(const Image& img);

struct ImageScore {
  std::string name;
  double psnr = 0;
  double ssim = 0;
};

struct Summary {
  double mean = 0;
  double std = 0;  ///< population standard deviation
};

struct MetricReport {
  std::vector<ImageScore> images;
  Summary psnr;
  Summary ssim;
};

Summary summarize(const std::vector<double>& values);

struct ImagePair {
  std::string name;
  Image test;
  Image reference;
};

/// Throws std::invalid_argument on an empty set.
MetricReport evaluate_set(const std::vector<ImagePair>& pairs);

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);

/// Header, one row per image and a final "mean±std" row.
std::string render_table(const MetricReport& r);

}  // namespace usrnet::metrics
