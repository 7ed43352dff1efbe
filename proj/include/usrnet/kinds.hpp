// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace usrnet {

/// Degradation taxonomy: three single weather effects and two haze mixtures.
enum class Kind { haze, rain, snow, haze_rain, haze_snow };

inline constexpr std::array<Kind, 5> kAllKinds{Kind::haze, Kind::rain, Kind::snow, Kind::haze_rain, Kind::haze_snow};

constexpr std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::haze: return "haze";
    case Kind::rain: return "rain";
    case Kind::snow: return "snow";
    case Kind::haze_rain: return "haze_rain";
    case Kind::haze_snow: return "haze_snow";
  }
  return "unknown";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (Kind k : kAllKinds)
    if (kind_name(k) == s) return k;
  return std::nullopt;
}

inline Kind kind_from_string(std::string_view s) {
  if (auto k = parse_kind(s)) return *k;
  throw std::invalid_argument("unknown degradation kind '" + std::string(s) + "'");
}

constexpr bool has_haze(Kind k) { return k == Kind::haze || k == Kind::haze_rain || k == Kind::haze_snow; }
constexpr bool has_streaks(Kind k) { return k != Kind::haze; }
constexpr bool is_snowy(Kind k) { return k == Kind::snow || k == Kind::haze_snow; }
constexpr bool is_mixed(Kind k) { return k == Kind::haze_rain || k == Kind::haze_snow; }

/// Single effects that make up `k`, haze first.
inline std::vector<Kind> components(Kind k) {
  switch (k) {
    case Kind::haze_rain: return {Kind::haze, Kind::rain};
    case Kind::haze_snow: return {Kind::haze, Kind::snow};
    default: return {k};
  }
}

}  // namespace usrnet
