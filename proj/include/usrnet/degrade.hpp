// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seed-deterministic synthesis of haze, rain/snow streaks and their mixtures.
// Every function here is pure.

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "usrnet/image.hpp"
#include "usrnet/kinds.hpp"

namespace usrnet::degrade {

struct StreakParams {
  double direction = 90;  ///< degrees, 0 = +x, 90 = +y (down the image)
  double length = 9;      ///< pixels
  double density = 0.01;  ///< fraction of pixels that seed a streak
  double intensity = 0.6; ///< peak mask value, in [0, 1]

  friend bool operator==(const StreakParams&, const StreakParams&) = default;
};

struct DegradationSpec {
  Kind kind = Kind::haze;
  double atmospheric_light = 0.9;
  double beta = 1.0;
  int streak_layer_count = 0;
  std::vector<StreakParams> streaks;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when an invariant of the kind is violated.
  void validate() const;
  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

nlohmann::json to_json(const DegradationSpec& spec);
/// Requires exactly the fields written by to_json(); validates the result.
DegradationSpec spec_from_json(const nlohmann::json& j);

struct TransmissionMap {
  Tensor<double> t;      ///< 1 x H x W
  Tensor<double> depth;  ///< 1 x H x W
  double beta = 0;
};

/// t = exp(-beta * depth).
TransmissionMap make_transmission(const Tensor<double>& depth, double beta);

/// I * t + A * (1 - t), per channel.
Image apply_haze(const Image& clean, const TransmissionMap& t, double atmospheric_light);

struct StreakLayer {
  Tensor<double> mask;  ///< 1 x H x W in [0, 1]
  StreakParams params;
};

/// One mask per spec.streaks entry. Each layer stamps round(density * H * W)
/// distinct seed pixels with a line of `length` samples along `direction`;
/// snow layers draw 2-pixel-thick flakes with a Gaussian profile and
/// per-flake angle jitter.
std::vector<StreakLayer> render_streaks(const DegradationSpec& spec, int height, int width);

/// clamp(I + sum(S_i), 0, 1), the same streak added to every channel.
Image apply_streaks(const Image& clean, const std::vector<StreakLayer>& layers);

/// clamp(I + sum(S_i), 0, 1) * t + A * (1 - t).
Image apply_mixed(const Image& clean, const std::vector<StreakLayer>& layers, const TransmissionMap& t,
                  double atmospheric_light);

/// (I_h - A * (1 - t)) / t; throws if any t < t_floor.
Image invert_haze(const Image& hazy, const TransmissionMap& t, double atmospheric_light, double t_floor = 0.05);

/// Normalized scene depth in [0, 1]: 0.7 * a vertical ramp (far at the top)
/// plus 0.3 * a seeded 4 x 4 random field upsampled bilinearly.
Tensor<double> default_depth(int height, int width, std::uint64_t seed);

struct SamplingRanges {
  double light_min = 0.8, light_max = 1.0;
  double beta_min = 0.6, beta_max = 1.8;
  int layers_min = 1, layers_max = 3;
  double rain_length_min = 7, rain_length_max = 15;
  double rain_density_min = 0.005, rain_density_max = 0.02;
  double rain_intensity_min = 0.3, rain_intensity_max = 0.7;
  double snow_length_min = 3, snow_length_max = 6;
  double snow_density_min = 0.003, snow_density_max = 0.01;
  double snow_intensity_min = 0.5, snow_intensity_max = 0.9;
};

/// Draws a valid spec of `kind` from `ranges`.
DegradationSpec sample_spec(Kind kind, std::uint64_t seed, const SamplingRanges& ranges = {});

/// Applies `spec` to a clean 3 x H x W image with the default depth model.
Image synthesize(const Image& clean, const DegradationSpec& spec);

}  // namespace usrnet::degrade
