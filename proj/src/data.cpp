// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "usrnet/random.hpp"

namespace usrnet::data {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const fs::path& path, int line, const std::string& msg) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + msg);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  static const std::set<std::string> kKeys{"clean_path", "degraded_path", "kind", "spec", "synthesis"};
  std::vector<ManifestEntry> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(path, line, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail(path, line, "entry must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (!kKeys.count(k)) fail(path, line, "unknown field '" + k + "'");
    ManifestEntry e;
    e.line = line;
    try {
      if (!j.contains("clean_path") || !j["clean_path"].is_string()) fail(path, line, "missing string field 'clean_path'");
      e.clean_path = resolve(base, j["clean_path"].get<std::string>());
      if (!j.contains("kind") || !j["kind"].is_string()) fail(path, line, "missing string field 'kind'");
      const auto kind = parse_kind(j["kind"].get<std::string>());
      if (!kind) fail(path, line, "unknown kind '" + j["kind"].get<std::string>() + "'");
      e.kind = *kind;
      const bool has_degraded = j.contains("degraded_path");
      const bool has_spec = j.contains("spec");
      if (has_degraded == has_spec) {
        fail(path, line, "entry for '" + j["clean_path"].get<std::string>() +
                             "' must have exactly one of 'degraded_path' and 'spec'");
      }
      if (has_degraded) {
        if (!j["degraded_path"].is_string()) fail(path, line, "'degraded_path' must be a string");
        e.degraded_path = resolve(base, j["degraded_path"].get<std::string>());
      }
      if (has_spec) e.spec = degrade::spec_from_json(j["spec"]);
      if (j.contains("synthesis")) e.synthesis = degrade::spec_from_json(j["synthesis"]);
      for (const auto& s : {e.spec, e.synthesis}) {
        if (s && s->kind != e.kind) {
          fail(path, line, "spec kind '" + std::string(kind_name(s->kind)) + "' differs from entry kind '" +
                               std::string(kind_name(e.kind)) + "'");
        }
      }
    } catch (const std::invalid_argument& ex) {
      fail(path, line, ex.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

json to_json(const ManifestEntry& e, const fs::path& base) {
  auto rel = [&base](const fs::path& p) {
    if (base.empty()) return p.generic_string();
    std::error_code ec;
    const fs::path r = fs::relative(p, base, ec);
    return (ec || r.empty()) ? p.generic_string() : r.generic_string();
  };
  json j{{"clean_path", rel(e.clean_path)}, {"kind", kind_name(e.kind)}};
  if (e.degraded_path) j["degraded_path"] = rel(*e.degraded_path);
  if (e.spec) j["spec"] = degrade::to_json(*e.spec);
  if (e.synthesis) j["synthesis"] = degrade::to_json(*e.synthesis);
  return j;
}

Sample realize(const ManifestEntry& entry) {
  Sample s;
  s.kind = entry.kind;
  s.name = entry.clean_path.filename().string();
  s.clean = read_png(entry.clean_path);
  if (entry.degraded_path) {
    s.degraded = read_png(*entry.degraded_path);
    s.name = entry.degraded_path->filename().string();
    if (!(s.degraded.shape() == s.clean.shape())) {
      throw std::runtime_error("paired images differ in size: " + entry.degraded_path->string() + " is " +
                               to_string(s.degraded.shape()) + ", " + entry.clean_path.string() + " is " +
                               to_string(s.clean.shape()));
    }
  } else if (entry.spec) {
    s.degraded = degrade::synthesize(s.clean, *entry.spec);
  } else {
    throw std::invalid_argument("manifest entry has neither degraded_path nor spec");
  }
  return s;
}

Kind Batch::kind() const {
  if (kinds.empty()) throw std::invalid_argument("empty batch");
  for (Kind k : kinds)
    if (k != kinds.front()) {
      throw std::invalid_argument("batch mixes kinds " + std::string(kind_name(kinds.front())) + " and " +
                                  std::string(kind_name(k)));
    }
  return kinds.front();
}

std::vector<Kind> kinds_present(const std::vector<Sample>& samples) {
  std::vector<Kind> out;
  for (Kind k : kAllKinds)
    if (std::any_of(samples.begin(), samples.end(), [k](const Sample& s) { return s.kind == k; })) out.push_back(k);
  return out;
}

namespace {

Image crop(const Image& img, int top, int left, int size, bool flip) {
  Image out(img.channels(), size, size);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out(c, y, flip ? size - 1 - x : x) = img(c, top + y, left + x);
  return out;
}

}  // namespace

std::vector<Batch> epoch_batches(const std::vector<Sample>& samples, const BatchOptions& opt, int epoch) {
  if (opt.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (opt.patch < 1) throw std::invalid_argument("patch must be >= 1");
  for (const auto& s : samples) {
    if (opt.patch > s.clean.height() || opt.patch > s.clean.width()) {
      throw std::invalid_argument("patch " + std::to_string(opt.patch) + " exceeds image '" + s.name + "' of " +
                                  to_string(s.clean.shape()));
    }
  }
  rnd::Engine rng(rnd::derive(opt.seed, 0xba7c0000ULL + static_cast<std::uint64_t>(epoch)));

  std::vector<std::vector<std::vector<std::size_t>>> per_kind;
  for (Kind k : kinds_present(samples)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].kind == k) idx.push_back(i);
    rnd::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < idx.size(); i += static_cast<std::size_t>(opt.batch_size)) {
      groups.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                          idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + opt.batch_size)));
    }
    per_kind.push_back(std::move(groups));
  }

  std::vector<Batch> out;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (const auto& groups : per_kind) {
      if (round >= groups.size()) continue;
      any = true;
      Batch b;
      for (std::size_t i : groups[round]) {
        const Sample& s = samples[i];
        const int top = static_cast<int>(rnd::uniform_int(rng, 0, s.clean.height() - opt.patch));
        const int left = static_cast<int>(rnd::uniform_int(rng, 0, s.clean.width() - opt.patch));
        const bool flip = opt.hflip && (rng() & 1u) != 0;
        b.kinds.push_back(s.kind);
        b.degraded.push_back(crop(s.degraded, top, left, opt.patch, flip));
        b.clean.push_back(crop(s.clean, top, left, opt.patch, flip));
        b.sources.push_back(i);
      }
      out.push_back(std::move(b));
    }
    if (!any) break;
  }
  return out;
}

Image procedural_scene(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw std::invalid_argument("procedural_scene: extents must be positive");
  rnd::Engine rng(rnd::derive(seed, 0x5ce7e));
  double base[3][3];
  for (auto& ch : base)
    for (double& v : ch) v = rnd::uniform(rng, 0.15, 0.85);
  Image img(3, height, width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double fy = static_cast<double>(y) / height, fx = static_cast<double>(x) / width;
        img(c, y, x) = base[c][0] + (base[c][1] - base[c][0]) * fy * 0.6 + (base[c][2] - base[c][0]) * fx * 0.4;
      }
  const int discs = 3 + static_cast<int>(rnd::uniform_int(rng, 0, 2));
  for (int d = 0; d < discs; ++d) {
    const double cy = rnd::uniform(rng, 0, height), cx = rnd::uniform(rng, 0, width);
    const double r = rnd::uniform(rng, 0.08, 0.25) * std::min(height, width);
    double col[3];
    for (double& v : col) v = rnd::uniform(rng, 0.05, 0.95);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dist = std::hypot(y - cy, x - cx);
        // Soft edge over about one pixel.
        const double a = std::clamp(r - dist + 0.5, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) img(c, y, x) = (1 - a) * img(c, y, x) + a * col[c];
      }
  }
  const int bars = 2;
  for (int b = 0; b < bars; ++b) {
    const bool vertical = (rng() & 1u) != 0;
    const int extent = vertical ? width : height;
    const int pos = static_cast<int>(rnd::uniform_int(rng, 0, extent - 1));
    const int thick = std::max(1, extent / 16);
    const double v = rnd::uniform(rng, 0.0, 1.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const int p = vertical ? x : y;
        if (p >= pos && p < pos + thick)
          for (int c = 0; c < 3; ++c) img(c, y, x) = 0.5 * img(c, y, x) + 0.5 * v;
      }
  }
  return img;
}

}  // namespace usrnet::data
