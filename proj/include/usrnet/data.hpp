// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON-lines manifests, sample realization and kind-uniform batching.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usrnet/degrade.hpp"

namespace usrnet::data {

namespace fs = std::filesystem;

/// One manifest line. Paths are resolved against the manifest's directory.
/// Exactly one of `degraded_path` and `spec` is present. `synthesis` records
/// the spec that produced a paired entry and is informational only.
struct ManifestEntry {
  fs::path clean_path;
  std::optional<fs::path> degraded_path;
  Kind kind = Kind::haze;
  std::optional<degrade::DegradationSpec> spec;
  std::optional<degrade::DegradationSpec> synthesis;
  int line = 0;
};

/// Parses and validates a manifest; blank lines are skipped. Errors carry
/// "<path>:<line>: ...".
std::vector<ManifestEntry> load_manifest(const fs::path& path);

/// Serializes an entry with paths written relative to `base` when possible.
nlohmann::json to_json(const ManifestEntry& e, const fs::path& base);

struct Sample {
  Image degraded;
  Image clean;
  Kind kind = Kind::haze;
  std::string name;
};

Sample realize(const ManifestEntry& entry);

struct Batch {
  std::vector<Kind> kinds;  ///< per sample
  std::vector<Image> degraded;
  std::vector<Image> clean;
  std::vector<std::size_t> sources;  ///< sample indices
  [[nodiscard]] std::size_t size() const { return degraded.size(); }
  /// The common kind; throws std::invalid_argument for an empty or mixed batch.
  [[nodiscard]] Kind kind() const;
};

struct BatchOptions {
  int patch = 64;
  int batch_size = 4;
  std::uint64_t seed = 0;
  bool hflip = false;
};

/// Batches of one epoch. Samples are grouped by kind (taxonomy order), each
/// group shuffled by (seed, epoch) and cut into batches, and the groups are
/// interleaved round-robin. Every batch crops aligned patch x patch windows
/// at seeded offsets. A pure function of (samples, options, epoch).
std::vector<Batch> epoch_batches(const std::vector<Sample>& samples, const BatchOptions& options, int epoch);

/// Kinds present in `samples`, in taxonomy order.
std::vector<Kind> kinds_present(const std::vector<Sample>& samples);

/// Smooth procedural test scene (gradients, discs and bars) in [0, 1].
Image procedural_scene(int height, int width, std::uint64_t seed);

}  // namespace usrnet::data
