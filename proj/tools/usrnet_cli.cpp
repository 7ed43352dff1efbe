// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// usrnet synthesize | train | restore | evaluate
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "usrnet/data.hpp"
#include "usrnet/degrade.hpp"
#include "usrnet/metrics.hpp"
#include "usrnet/random.hpp"
#include "usrnet/simd/kernels.hpp"
#include "usrnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace usrnet;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log(const std::string& msg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  std::cerr << "[" << stamp << "] " << msg << std::endl;
}

/// --seed, then the config value, then USRNET_SEED, then `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& config,
                           std::uint64_t fallback) {
  if (flag) return *flag;
  if (config) return *config;
  if (const char* env = std::getenv("USRNET_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("USRNET_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return fallback;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

json read_json_file(const fs::path& path, bool usage) {
  std::ifstream in(path);
  if (!in) {
    if (usage) throw UsageError("cannot open " + path.string());
    throw std::runtime_error("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct SynthesizeArgs {
  std::string clean_dir, out_dir, kind, spec_file;
  int count = 0;
  std::optional<std::uint64_t> seed;
};

int cmd_synthesize(const SynthesizeArgs& a) {
  const auto kind = parse_kind(a.kind);
  if (!kind) throw UsageError("unknown kind '" + a.kind + "'");
  if (a.count < 1) throw UsageError("--count must be >= 1");
  if (!fs::is_directory(a.clean_dir)) throw UsageError("--clean-dir is not a directory: " + a.clean_dir);
  const auto sources = png_files(a.clean_dir);
  if (sources.empty()) throw UsageError("--clean-dir contains no PNG images: " + a.clean_dir);
  std::optional<degrade::DegradationSpec> tmpl;
  if (!a.spec_file.empty()) {
    try {
      tmpl = degrade::spec_from_json(read_json_file(a.spec_file, true));
    } catch (const std::invalid_argument& e) {
      throw UsageError(a.spec_file + ": " + e.what());
    }
    if (tmpl->kind != *kind) throw UsageError("--spec-file kind differs from --kind");
  }
  const std::uint64_t seed = resolve_seed(a.seed, std::nullopt, 0);
  log("synthesize kind=" + a.kind + " count=" + std::to_string(a.count) + " seed=" + std::to_string(seed) +
      " sources=" + std::to_string(sources.size()) + (tmpl ? " spec=" + a.spec_file : ""));

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  std::string manifest;
  for (int i = 0; i < a.count; ++i) {
    const fs::path& src = sources[static_cast<std::size_t>(i) % sources.size()];
    const Image clean = read_png(src);
    const std::uint64_t s = rnd::derive(seed, static_cast<std::uint64_t>(i));
    degrade::DegradationSpec spec;
    if (tmpl) {
      spec = *tmpl;
      spec.seed = s;
    } else {
      spec = degrade::sample_spec(*kind, s);
    }
    char name[64];
    std::snprintf(name, sizeof name, "degraded_%04d.png", i);
    write_png(out / name, degrade::synthesize(clean, spec));
    data::ManifestEntry e;
    e.clean_path = fs::absolute(src);
    e.degraded_path = fs::absolute(out / name);
    e.kind = *kind;
    e.synthesis = spec;
    manifest += data::to_json(e, fs::absolute(out)).dump() + "\n";
  }
  std::ofstream m(out / "manifest.jsonl", std::ios::trunc);
  m << manifest;
  if (!m) throw std::runtime_error("failed writing " + (out / "manifest.jsonl").string());
  log("wrote " + std::to_string(a.count) + " images and " + (out / "manifest.jsonl").string());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, config, out;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_steps;
  std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a) {
  json j = json::object();
  if (!a.config.empty()) j = read_json_file(a.config, true);
  if (!j.is_object()) throw UsageError(a.config + ": config must be a JSON object");
  std::optional<std::uint64_t> config_seed;
  if (j.contains("seed") && j["seed"].is_number_unsigned()) config_seed = j["seed"].get<std::uint64_t>();
  train::TrainConfig cfg = train::config_from_json(j);
  cfg.seed = resolve_seed(a.seed, config_seed, 0);
  if (a.max_steps) cfg.max_steps = *a.max_steps;
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  log("simd " + std::string(simd::isa_name(simd::active_isa())));
  train::TrainOptions opt;
  opt.out_dir = a.out;
  opt.resume = a.resume;
  opt.log = log;
  const auto summary = train::train(cfg, fs::path(a.manifest), opt);
  log("checkpoint " + summary.checkpoint.string() + ", loss log " + summary.loss_log.string());
  return 0;
}

// ---------------------------------------------------------------------------

struct RestoreArgs {
  std::string checkpoint, input, out, mode = "all", edge_out;
};

int cmd_restore(const RestoreArgs& a) {
  std::optional<Kind> single;
  if (a.mode != "all") {
    single = parse_kind(a.mode);
    if (!single) throw UsageError("--mode must be 'all' or a kind, got '" + a.mode + "'");
  }
  if (!fs::exists(a.input)) throw UsageError("--input does not exist: " + a.input);
  auto loaded = train::load_checkpoint(a.checkpoint);
  auto& model = *loaded.state.model;
  const auto routing = single ? model::Routing::single(*single) : model::Routing::infer();
  (void)model.bank.route(routing);

  std::map<Kind, int> calls;
  model.bank.on_node_call = [&calls](Kind k) { ++calls[k]; };

  std::vector<std::pair<fs::path, fs::path>> jobs;
  const bool dir_mode = fs::is_directory(a.input);
  if (dir_mode) {
    for (const auto& p : png_files(a.input)) jobs.emplace_back(p, fs::path(a.out) / p.filename());
    if (jobs.empty()) throw UsageError("--input contains no PNG images: " + a.input);
  } else {
    jobs.emplace_back(a.input, a.out);
  }
  log("restore routing=" + routing.describe() + " images=" + std::to_string(jobs.size()));
  for (const auto& [in, out] : jobs) {
    calls.clear();
    const Image img = read_png(in);
    ad::Graph<float> g(false);
    auto result = model.forward(g, g.constant(img.cast<float>()), routing);
    write_png(out, result.restored.value().cast<double>());
    if (!a.edge_out.empty()) {
      Image edge = result.edge_map.value().cast<double>();
      for (auto& v : edge.span()) v = 0.5 + v;
      const fs::path ep = dir_mode ? fs::path(a.edge_out) / in.filename() : fs::path(a.edge_out);
      write_png(ep, edge);
    }
    std::string counts;
    for (Kind k : model.bank.kinds()) counts += " " + std::string(kind_name(k)) + "=" + std::to_string(calls[k]);
    log("restored " + in.string() + " -> " + out.string() + " node calls:" + counts);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string pairs, report;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::ifstream in(a.pairs);
  if (!in) throw UsageError("cannot open pairs manifest " + a.pairs);
  const fs::path base = fs::path(a.pairs).parent_path();
  auto resolve = [&base](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::vector<metrics::ImagePair> pairs;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw UsageError(a.pairs + ":" + std::to_string(n) + ": invalid JSON: " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (k != "test_path" && k != "reference_path" && k != "name") {
        throw UsageError(a.pairs + ":" + std::to_string(n) + ": unknown field '" + k + "'");
      }
    }
    if (!j.contains("test_path") || !j.contains("reference_path")) {
      throw UsageError(a.pairs + ":" + std::to_string(n) + ": needs 'test_path' and 'reference_path'");
    }
    metrics::ImagePair p;
    const auto test = resolve(j["test_path"].get<std::string>());
    p.name = j.value("name", test.filename().string());
    p.test = read_png(test);
    p.reference = read_png(resolve(j["reference_path"].get<std::string>()));
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw UsageError("pairs manifest is empty: " + a.pairs);
  const auto report = metrics::evaluate_set(pairs);
  const fs::path out(a.report);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  {
    std::ofstream f(out, std::ios::trunc);
    f << metrics::to_json(report).dump(2) << "\n";
    if (!f) throw std::runtime_error("failed writing " + out.string());
  }
  const std::string table = metrics::render_table(report);
  fs::path txt = out;
  txt += ".txt";
  std::ofstream(txt, std::ios::trunc) << table;
  std::cout << table;
  log("evaluated " + std::to_string(pairs.size()) + " pairs -> " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"usrnet: synthetic weather degradation, restoration training and evaluation"};
  app.require_subcommand(1);

  SynthesizeArgs sa;
  auto* syn = app.add_subcommand("synthesize", "degrade clean PNGs and write a paired manifest");
  syn->add_option("--clean-dir", sa.clean_dir, "directory of clean PNG images")->required();
  syn->add_option("--out-dir", sa.out_dir, "output directory")->required();
  syn->add_option("--kind", sa.kind, "haze | rain | snow | haze_rain | haze_snow")->required();
  syn->add_option("--count", sa.count, "number of degraded images")->required();
  syn->add_option("--seed", sa.seed, "base seed (default: USRNET_SEED, else 0)");
  syn->add_option("--spec-file", sa.spec_file, "JSON degradation spec used as a template");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--manifest", ta.manifest, "JSON-lines training manifest")->required();
  tr->add_option("--config", ta.config, "JSON training config");
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->add_flag("--resume", ta.resume, "continue from <out>/checkpoint.usrn");
  tr->add_option("--seed", ta.seed, "overrides the config seed");
  tr->add_option("--max-steps", ta.max_steps, "overrides max_steps");
  tr->add_option("--epochs", ta.epochs, "overrides epochs");

  RestoreArgs ra;
  auto* rs = app.add_subcommand("restore", "restore PNG images with a trained checkpoint");
  rs->add_option("--checkpoint", ra.checkpoint, "checkpoint file")->required();
  rs->add_option("--input", ra.input, "PNG file or directory")->required();
  rs->add_option("--out", ra.out, "output PNG file or directory")->required();
  rs->add_option("--mode", ra.mode, "'all' chains every node; a kind keeps only that node");
  rs->add_option("--edge-out", ra.edge_out, "also write edge maps (file or directory)");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "PSNR / SSIM report over image pairs");
  ev->add_option("--pairs-manifest", ea.pairs, "JSON lines with test_path, reference_path, optional name")->required();
  ev->add_option("--report", ea.report, "report JSON path; the table goes to <report>.txt")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (syn->parsed()) return cmd_synthesize(sa);
    if (tr->parsed()) return cmd_train(ta);
    if (rs->parsed()) return cmd_restore(ra);
    if (ev->parsed()) return cmd_evaluate(ea);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return 2;
  } catch (const train::ConfigError& e) {
    std::cerr << "config error (" << e.key() << "): " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
