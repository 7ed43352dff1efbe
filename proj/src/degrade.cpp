// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "usrnet/random.hpp"

namespace usrnet::degrade {

using nlohmann::json;

void DegradationSpec::validate() const {
  if (!(atmospheric_light >= 0.7 && atmospheric_light <= 1.0)) {
    throw std::invalid_argument("atmospheric_light must lie in [0.7, 1.0]");
  }
  if (!(beta >= 0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and >= 0");
  if (streak_layer_count < 0) throw std::invalid_argument("streak_layer_count must be >= 0");
  if (static_cast<std::size_t>(streak_layer_count) != streaks.size()) {
    throw std::invalid_argument("streak_layer_count (" + std::to_string(streak_layer_count) + ") does not match " +
                                std::to_string(streaks.size()) + " streak entries");
  }
  const std::string k(kind_name(kind));
  if (kind == Kind::haze && streak_layer_count != 0) throw std::invalid_argument("haze spec must have no streak layers");
  if ((kind == Kind::rain || kind == Kind::snow) && beta != 0) throw std::invalid_argument(k + " spec must have beta = 0");
  if (is_mixed(kind) && (streak_layer_count < 1 || !(beta > 0))) {
    throw std::invalid_argument(k + " spec needs at least one streak layer and beta > 0");
  }
  for (const auto& s : streaks) {
    if (!std::isfinite(s.direction)) throw std::invalid_argument("streak direction must be finite");
    if (!(s.length >= 1) || !std::isfinite(s.length)) throw std::invalid_argument("streak length must be >= 1");
    if (!(s.density >= 0 && s.density <= 1)) throw std::invalid_argument("streak density must lie in [0, 1]");
    if (!(s.intensity >= 0 && s.intensity <= 1)) throw std::invalid_argument("streak intensity must lie in [0, 1]");
  }
}

json to_json(const DegradationSpec& spec) {
  json streaks = json::array();
  for (const auto& s : spec.streaks) {
    streaks.push_back({{"direction", s.direction}, {"length", s.length}, {"density", s.density}, {"intensity", s.intensity}});
  }
  return json{{"kind", kind_name(spec.kind)},
              {"atmospheric_light", spec.atmospheric_light},
              {"beta", spec.beta},
              {"streak_layer_count", spec.streak_layer_count},
              {"streaks", streaks},
              {"seed", spec.seed}};
}

namespace {

void require_exact_keys(const json& j, const std::set<std::string>& keys, const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw std::invalid_argument(what + ": unknown field '" + k + "'");
  for (const auto& k : keys)
    if (!j.contains(k)) throw std::invalid_argument(what + ": missing field '" + k + "'");
}

double number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw std::invalid_argument(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

DegradationSpec spec_from_json(const json& j) {
  require_exact_keys(j, {"kind", "atmospheric_light", "beta", "streak_layer_count", "streaks", "seed"}, "degradation spec");
  DegradationSpec s;
  if (!j.at("kind").is_string()) throw std::invalid_argument("field 'kind' must be a string");
  s.kind = kind_from_string(j.at("kind").get<std::string>());
  s.atmospheric_light = number(j, "atmospheric_light");
  s.beta = number(j, "beta");
  if (!j.at("streak_layer_count").is_number_integer()) throw std::invalid_argument("field 'streak_layer_count' must be an integer");
  s.streak_layer_count = j.at("streak_layer_count").get<int>();
  if (!j.at("seed").is_number_integer()) throw std::invalid_argument("field 'seed' must be an integer");
  s.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("streaks").is_array()) throw std::invalid_argument("field 'streaks' must be an array");
  for (const auto& e : j.at("streaks")) {
    require_exact_keys(e, {"direction", "length", "density", "intensity"}, "streak layer");
    s.streaks.push_back({number(e, "direction"), number(e, "length"), number(e, "density"), number(e, "intensity")});
  }
  s.validate();
  return s;
}

TransmissionMap make_transmission(const Tensor<double>& depth, double beta) {
  if (!(beta >= 0) || !std::isfinite(beta)) throw std::invalid_argument("make_transmission: beta must be finite and >= 0");
  if (depth.channels() != 1) throw std::invalid_argument("make_transmission: depth must be a single-channel map");
  TransmissionMap tm{Tensor<double>(depth.shape()), depth, beta};
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double d = depth[i];
    if (!(d >= 0) || !std::isfinite(d)) throw std::invalid_argument("make_transmission: depth must be finite and >= 0");
    tm.t[i] = std::exp(-beta * d);
  }
  return tm;
}

namespace {

void check_map(const Image& img, const Tensor<double>& map, const char* what) {
  if (img.channels() != 3) throw std::invalid_argument(std::string(what) + ": expected a 3-channel image");
  if (map.channels() != 1 || map.height() != img.height() || map.width() != img.width()) {
    throw std::invalid_argument(std::string(what) + ": map " + to_string(map.shape()) + " does not match image " +
                                to_string(img.shape()));
  }
}

/// clamp(I + sum S, 0, 1).
Image streaked(const Image& clean, const std::vector<StreakLayer>& layers, const char* what) {
  for (const auto& l : layers) check_map(clean, l.mask, what);
  Image out = clean;
  const std::size_t plane = clean.shape().plane();
  if (layers.empty()) return out;
  std::vector<double> total(plane, 0.0);
  for (const auto& l : layers)
    for (std::size_t i = 0; i < plane; ++i) total[i] += l.mask[i];
  for (int c = 0; c < 3; ++c) {
    double* p = out.channel(c);
    for (std::size_t i = 0; i < plane; ++i) p[i] = std::clamp(p[i] + total[i], 0.0, 1.0);
  }
  return out;
}

Image scatter(const Image& radiance, const Tensor<double>& t, double a) {
  Image out(radiance.shape());
  const std::size_t plane = radiance.shape().plane();
  for (int c = 0; c < 3; ++c) {
    const double* in = radiance.channel(c);
    double* o = out.channel(c);
    for (std::size_t i = 0; i < plane; ++i) o[i] = in[i] * t[i] + a * (1.0 - t[i]);
  }
  return out;
}

}  // namespace

Image apply_haze(const Image& clean, const TransmissionMap& t, double atmospheric_light) {
  check_map(clean, t.t, "apply_haze");
  if (!(atmospheric_light >= 0 && atmospheric_light <= 1)) throw std::invalid_argument("apply_haze: A must lie in [0, 1]");
  return scatter(clean, t.t, atmospheric_light);
}

Image apply_streaks(const Image& clean, const std::vector<StreakLayer>& layers) {
  if (clean.channels() != 3) throw std::invalid_argument("apply_streaks: expected a 3-channel image");
  return streaked(clean, layers, "apply_streaks");
}

Image apply_mixed(const Image& clean, const std::vector<StreakLayer>& layers, const TransmissionMap& t,
                  double atmospheric_light) {
  check_map(clean, t.t, "apply_mixed");
  if (!(atmospheric_light >= 0 && atmospheric_light <= 1)) throw std::invalid_argument("apply_mixed: A must lie in [0, 1]");
  return scatter(streaked(clean, layers, "apply_mixed"), t.t, atmospheric_light);
}

Image invert_haze(const Image& hazy, const TransmissionMap& t, double atmospheric_light, double t_floor) {
  check_map(hazy, t.t, "invert_haze");
  for (std::size_t i = 0; i < t.t.size(); ++i) {
    if (!(t.t[i] >= t_floor)) {
      throw std::invalid_argument("invert_haze: transmission " + std::to_string(t.t[i]) + " below floor " +
                                  std::to_string(t_floor));
    }
  }
  Image out(hazy.shape());
  const std::size_t plane = hazy.shape().plane();
  for (int c = 0; c < 3; ++c) {
    const double* in = hazy.channel(c);
    double* o = out.channel(c);
    for (std::size_t i = 0; i < plane; ++i) o[i] = (in[i] - atmospheric_light * (1.0 - t.t[i])) / t.t[i];
  }
  return out;
}

namespace {

void stamp_line(Tensor<double>& mask, double cx, double cy, double angle_deg, int samples, int thickness, double value,
                bool gaussian) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(a), dy = std::sin(a);
  // Perpendicular offset for the second row of thick strokes.
  const double px = -dy, py = dx;
  const double mid = (samples - 1) / 2.0;
  const double sigma = std::max(samples / 2.0, 0.5);
  for (int s = 0; s < samples; ++s) {
    const double off = s - mid;
    const double v = gaussian ? value * std::exp(-off * off / (2 * sigma * sigma)) : value;
    for (int k = 0; k < thickness; ++k) {
      const int x = static_cast<int>(std::lround(cx + off * dx + k * px));
      const int y = static_cast<int>(std::lround(cy + off * dy + k * py));
      if (x < 0 || y < 0 || x >= mask.width() || y >= mask.height()) continue;
      double& m = mask(0, y, x);
      m = std::max(m, v);
    }
  }
}

}  // namespace

std::vector<StreakLayer> render_streaks(const DegradationSpec& spec, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("render_streaks: image extents must be positive");
  if (static_cast<std::size_t>(spec.streak_layer_count) != spec.streaks.size()) {
    throw std::invalid_argument("render_streaks: streak_layer_count does not match the streak list");
  }
  const bool snow = is_snowy(spec.kind);
  const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::vector<StreakLayer> layers;
  for (std::size_t li = 0; li < spec.streaks.size(); ++li) {
    const StreakParams& p = spec.streaks[li];
    StreakLayer layer{Tensor<double>(1, height, width), p};
    rnd::Engine rng(rnd::derive(spec.seed, 0x57a3ULL + li));
    const auto count = static_cast<std::size_t>(std::llround(p.density * static_cast<double>(pixels)));
    // Distinct seed pixels: partial Fisher-Yates over all positions.
    std::vector<std::uint32_t> order(pixels);
    std::iota(order.begin(), order.end(), 0u);
    const int samples = std::max(1, static_cast<int>(std::lround(p.length)));
    for (std::size_t i = 0; i < count && i < pixels; ++i) {
      const auto j = static_cast<std::size_t>(rnd::uniform_int(rng, static_cast<std::int64_t>(i), static_cast<std::int64_t>(pixels - 1)));
      std::swap(order[i], order[j]);
      const int y = static_cast<int>(order[i] / static_cast<std::uint32_t>(width));
      const int x = static_cast<int>(order[i] % static_cast<std::uint32_t>(width));
      const double value = rnd::uniform(rng, 0.6, 1.0);
      if (snow) {
        const double jitter = rnd::uniform(rng, -20.0, 20.0);
        stamp_line(layer.mask, x, y, p.direction + jitter, samples, 2, value, true);
      } else {
        stamp_line(layer.mask, x, y, p.direction, samples, 1, value, false);
      }
    }
    const double peak = *std::max_element(layer.mask.span().begin(), layer.mask.span().end());
    if (peak > 0)
      for (auto& v : layer.mask.span()) v = v / peak * p.intensity;
    layers.push_back(std::move(layer));
  }
  return layers;
}

Tensor<double> default_depth(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw std::invalid_argument("default_depth: extents must be positive");
  constexpr int kGrid = 4;
  rnd::Engine rng(rnd::derive(seed, 0xde9ULL));
  double field[kGrid][kGrid];
  for (auto& row : field)
    for (double& v : row) v = rnd::unit(rng);
  Tensor<double> d(1, height, width);
  for (int y = 0; y < height; ++y) {
    const double fy = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
    const double gy = fy * (kGrid - 1);
    const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
    const double ty = gy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
      const double gx = fx * (kGrid - 1);
      const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
      const double tx = gx - x0;
      const double r = (1 - ty) * ((1 - tx) * field[y0][x0] + tx * field[y0][x0 + 1]) +
                       ty * ((1 - tx) * field[y0 + 1][x0] + tx * field[y0 + 1][x0 + 1]);
      d(0, y, x) = std::clamp(0.7 * (1.0 - fy) + 0.3 * r, 0.0, 1.0);
    }
  }
  return d;
}

DegradationSpec sample_spec(Kind kind, std::uint64_t seed, const SamplingRanges& r) {
  rnd::Engine rng(rnd::derive(seed, 0x5bec));
  DegradationSpec s;
  s.kind = kind;
  s.seed = seed;
  s.atmospheric_light = rnd::uniform(rng, r.light_min, r.light_max);
  s.beta = has_haze(kind) ? rnd::uniform(rng, r.beta_min, r.beta_max) : 0.0;
  if (has_streaks(kind)) {
    s.streak_layer_count = static_cast<int>(rnd::uniform_int(rng, r.layers_min, r.layers_max));
    const bool snow = is_snowy(kind);
    for (int i = 0; i < s.streak_layer_count; ++i) {
      StreakParams p;
      if (snow) {
        p.direction = rnd::uniform(rng, 45.0, 135.0);
        p.length = rnd::uniform(rng, r.snow_length_min, r.snow_length_max);
        p.density = rnd::uniform(rng, r.snow_density_min, r.snow_density_max);
        p.intensity = rnd::uniform(rng, r.snow_intensity_min, r.snow_intensity_max);
      } else {
        p.direction = rnd::uniform(rng, 60.0, 120.0);
        p.length = rnd::uniform(rng, r.rain_length_min, r.rain_length_max);
        p.density = rnd::uniform(rng, r.rain_density_min, r.rain_density_max);
        p.intensity = rnd::uniform(rng, r.rain_intensity_min, r.rain_intensity_max);
      }
      s.streaks.push_back(p);
    }
  }
  s.validate();
  return s;
}

Image synthesize(const Image& clean, const DegradationSpec& spec) {
  spec.validate();
  if (clean.channels() != 3) throw std::invalid_argument("synthesize: expected a 3-channel image");
  const int h = clean.height(), w = clean.width();
  const auto layers = render_streaks(spec, h, w);
  if (!has_haze(spec.kind)) return apply_streaks(clean, layers);
  const TransmissionMap t = make_transmission(default_depth(h, w, spec.seed), spec.beta);
  if (spec.kind == Kind::haze) return apply_haze(clean, t, spec.atmospheric_light);
  return apply_mixed(clean, layers, t, spec.atmospheric_light);
}

}  // namespace usrnet::degrade
