// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Portable draws on top of std::mt19937_64. The standard distributions are
// implementation-defined, so streams that must be reproducible use these.

#pragma once

#include <cstdint>
#include <random>

namespace usrnet::rnd {

using Engine = std::mt19937_64;

/// splitmix64 finalizer; derives independent sub-seeds.
constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) { return mix(seed ^ mix(stream)); }

/// Uniform in [0, 1).
inline double unit(Engine& e) { return static_cast<double>(e() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& e, double lo, double hi) { return lo + (hi - lo) * unit(e); }

/// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Engine& e, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(e() % span);
}

template <class It>
void shuffle(It first, It last, Engine& e) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = uniform_int(e, 0, i);
    std::swap(first[i], first[j]);
  }
}

}  // namespace usrnet::rnd
