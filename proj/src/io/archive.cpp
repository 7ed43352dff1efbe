// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/io/archive.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace usrnet::io {

namespace {

constexpr char kMagic[8] = {'U', 'S', 'R', 'N', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

class Writer {
 public:
  template <class V>
  void put(V v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(V));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size, std::string origin) : p_(data), end_(data + size), origin_(std::move(origin)) {}

  template <class V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  const char* take(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) throw std::runtime_error(origin_ + ": archive is truncated");
    const char* out = p_;
    p_ += n;
    return out;
  }
  [[nodiscard]] bool done() const { return p_ == end_; }

 private:
  const char* p_;
  const char* end_;
  std::string origin_;
};

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

const ArchiveEntry* Archive::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kArchiveVersion);
  const std::string manifest = archive.manifest.dump();
  w.put<std::uint64_t>(manifest.size());
  w.bytes(manifest.data(), manifest.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(archive.entries.size()));
  for (const auto& e : archive.entries) {
    std::int64_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != static_cast<std::int64_t>(e.data.size())) {
      throw std::invalid_argument("archive entry '" + e.name + "': dims do not match data size");
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) w.put<std::int64_t>(d);
    w.put<std::uint64_t>(e.data.size());
    w.bytes(e.data.data(), e.data.size() * sizeof(float));
  }
  w.put<std::uint32_t>(crc_of(w.buffer().data(), w.buffer().size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  if (buf.size() < sizeof kMagic + 4 + 4) throw std::runtime_error(origin + ": archive is truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw std::runtime_error(origin + ": not a usrnet archive");

  const std::size_t body = buf.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, buf.data() + body, 4);
  if (stored != crc_of(buf.data(), body)) throw std::runtime_error(origin + ": checksum mismatch (corrupt or truncated)");

  Reader r(buf.data(), body, origin);
  r.take(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw std::runtime_error(origin + ": unsupported archive version " + std::to_string(version) + " (expected " +
                             std::to_string(kArchiveVersion) + ")");
  }
  Archive a;
  const auto mlen = r.get<std::uint64_t>();
  const char* m = r.take(mlen);
  a.manifest = nlohmann::json::parse(m, m + mlen);
  const auto n = r.get<std::uint32_t>();
  a.entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ArchiveEntry e;
    const auto name_len = r.get<std::uint32_t>();
    e.name.assign(r.take(name_len), name_len);
    const auto ndim = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < ndim; ++d) e.dims.push_back(r.get<std::int64_t>());
    const auto count = r.get<std::uint64_t>();
    e.data.resize(count);
    std::memcpy(e.data.data(), r.take(count * sizeof(float)), count * sizeof(float));
    a.entries.push_back(std::move(e));
  }
  if (!r.done()) throw std::runtime_error(origin + ": trailing bytes after last entry");
  return a;
}

}  // namespace usrnet::io
