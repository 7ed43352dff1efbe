// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary array archive used for checkpoints and feature-extractor weights.
//
//   "USRNCKPT"  u32 version  u64 len  manifest JSON (len bytes)
//   u32 entry count, then per entry:
//     u32 name len, name, u32 ndim, i64 dims[ndim], u64 count, f32 data[count]
//   u32 crc32 of every preceding byte
//
// All integers and floats are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace usrnet::io {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchiveEntry {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<float> data;
};

struct Archive {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<ArchiveEntry> entries;

  /// nullptr when absent.
  [[nodiscard]] const ArchiveEntry* find(const std::string& name) const;
};

/// Writes to a sibling temporary file and renames it over `path`.
void write_archive(const std::filesystem::path& path, const Archive& archive);

/// Throws std::runtime_error on I/O failure, bad magic, version mismatch,
/// truncation or checksum mismatch.
Archive read_archive(const std::filesystem::path& path);

}  // namespace usrnet::io
