// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "usrnet/io/archive.hpp"
#include "usrnet/random.hpp"

namespace usrnet::train {

using nlohmann::json;

std::string mode_name(TrainMode m) { return m == TrainMode::all_in_one ? "all_in_one" : "one_to_one"; }

TrainMode parse_mode(const std::string& s) {
  if (s == "all_in_one") return TrainMode::all_in_one;
  if (s == "one_to_one") return TrainMode::one_to_one;
  throw std::invalid_argument("unknown training mode '" + s + "' (expected all_in_one or one_to_one)");
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& msg) { throw ConfigError(key, key + ": " + msg); };
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (!(base_lr > 0)) bad("base_lr", "must be > 0");
  if (!(decay_factor > 0)) bad("decay_factor", "must be > 0");
  if (decay_every < 1) bad("decay_every", "must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) bad("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) bad("adam_beta2", "must lie in [0, 1)");
  if (!(adam_epsilon > 0)) bad("adam_epsilon", "must be > 0");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (patch < 16) bad("patch", "must be >= 16");
  if (max_steps < 0) bad("max_steps", "must be >= 0");
  if (checkpoint_every < 0) bad("checkpoint_every", "must be >= 0");
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    bad("loss", e.what());
  }
  try {
    model::validate(model);
  } catch (const std::invalid_argument& e) {
    bad("model", e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const model::ModelConfig& cfg) {
  json bank = json::array();
  for (Kind k : cfg.bank) bank.push_back(kind_name(k));
  return {{"channels", cfg.channels},
          {"bank", bank},
          {"dres",
           {{"frequency_paths", cfg.dres.frequency_paths}, {"dilated", cfg.dres.dilated}, {"laplacian", cfg.dres.laplacian}}},
          {"dilation_rate", cfg.dilation_rate}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"base_lr", c.base_lr},
          {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"grad_clip", c.grad_clip},
          {"loss",
           {{"gamma1", c.loss.gamma1},
            {"gamma2", c.loss.gamma2},
            {"lambda_edge", c.loss.lambda_edge},
            {"epsilon", c.loss.epsilon},
            {"contrastive_reduction", losses::reduction_name(c.contrastive_reduction)},
            {"phi_seed", c.phi_seed},
            {"phi_weights", c.phi_weights}}},
          {"batch_size", c.batch_size},
          {"patch", c.patch},
          {"hflip", c.hflip},
          {"seed", c.seed},
          {"mode", mode_name(c.mode)},
          {"model", to_json(c.model)},
          {"max_steps", c.max_steps},
          {"checkpoint_every", c.checkpoint_every}};
}

namespace {

/// Reads known keys out of an object and rejects the rest.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "config section '" + prefix_ + "' must be an object");
  }

  template <class F>
  void take(const std::string& key, F&& read) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string full = prefix_.empty() ? key : prefix_ + "." + key;
    try {
      read(*it, full);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(full, "config key '" + full + "': " + e.what());
    }
  }

  void number(const std::string& key, double& out) {
    take(key, [&](const json& v, const std::string& full) {
      if (!v.is_number()) throw ConfigError(full, "config key '" + full + "' must be a number");
      out = v.get<double>();
    });
  }
  template <class I>
  void integer(const std::string& key, I& out) {
    take(key, [&](const json& v, const std::string& full) {
      if (!v.is_number_integer()) throw ConfigError(full, "config key '" + full + "' must be an integer");
      out = v.get<I>();
    });
  }
  void boolean(const std::string& key, bool& out) {
    take(key, [&](const json& v, const std::string& full) {
      if (!v.is_boolean()) throw ConfigError(full, "config key '" + full + "' must be true or false");
      out = v.get<bool>();
    });
  }
  void string(const std::string& key, const std::function<void(const std::string&)>& set) {
    take(key, [&](const json& v, const std::string& full) {
      if (!v.is_string()) throw ConfigError(full, "config key '" + full + "' must be a string");
      set(v.get<std::string>());
    });
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        const std::string full = prefix_.empty() ? k : prefix_ + "." + k;
        throw ConfigError(full, "unknown config key '" + full + "'");
      }
    }
  }

  [[nodiscard]] std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void read_model(const json& j, const std::string& prefix, model::ModelConfig& m) {
  Fields f(j, prefix);
  f.take("channels", [&](const json& v, const std::string& full) {
    if (!v.is_array() || v.size() != 4) throw ConfigError(full, "config key '" + full + "' must be an array of 4 integers");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!v[i].is_number_integer()) throw ConfigError(full, "config key '" + full + "' must be an array of 4 integers");
      m.channels[i] = v[i].get<int>();
    }
  });
  f.take("bank", [&](const json& v, const std::string& full) {
    if (!v.is_array()) throw ConfigError(full, "config key '" + full + "' must be an array of kinds");
    m.bank.clear();
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(full, "config key '" + full + "' must be an array of kinds");
      m.bank.push_back(kind_from_string(e.get<std::string>()));
    }
  });
  f.take("dres", [&](const json& v, const std::string& full) {
    Fields d(v, full);
    d.boolean("frequency_paths", m.dres.frequency_paths);
    d.boolean("dilated", m.dres.dilated);
    d.boolean("laplacian", m.dres.laplacian);
    d.finish();
  });
  f.integer("dilation_rate", m.dilation_rate);
  f.finish();
}

}  // namespace

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig m;
  read_model(j, "model", m);
  model::validate(m);
  return m;
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  Fields f(j, "");
  f.integer("epochs", c.epochs);
  f.number("base_lr", c.base_lr);
  f.number("decay_factor", c.decay_factor);
  f.integer("decay_every", c.decay_every);
  f.number("adam_beta1", c.adam_beta1);
  f.number("adam_beta2", c.adam_beta2);
  f.number("adam_epsilon", c.adam_epsilon);
  f.number("grad_clip", c.grad_clip);
  f.take("loss", [&](const json& v, const std::string& full) {
    Fields l(v, full);
    l.number("gamma1", c.loss.gamma1);
    l.number("gamma2", c.loss.gamma2);
    l.number("lambda_edge", c.loss.lambda_edge);
    l.number("epsilon", c.loss.epsilon);
    l.string("contrastive_reduction", [&](const std::string& s) { c.contrastive_reduction = losses::parse_reduction(s); });
    l.integer("phi_seed", c.phi_seed);
    l.string("phi_weights", [&](const std::string& s) { c.phi_weights = s; });
    l.finish();
  });
  f.integer("batch_size", c.batch_size);
  f.integer("patch", c.patch);
  f.boolean("hflip", c.hflip);
  f.integer("seed", c.seed);
  f.string("mode", [&](const std::string& s) { c.mode = parse_mode(s); });
  f.take("model", [&](const json& v, const std::string& full) { read_model(v, full, c.model); });
  f.integer("max_steps", c.max_steps);
  f.integer("checkpoint_every", c.checkpoint_every);
  f.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.base_lr;
  for (int k = epoch / cfg.decay_every; k > 0; --k) lr *= cfg.decay_factor;
  return lr;
}

model::ModelConfig effective_model_config(const TrainConfig& cfg, const std::vector<Kind>& data_kinds) {
  model::ModelConfig m = cfg.model;
  if (cfg.mode == TrainMode::one_to_one) m.bank = data_kinds;
  return m;
}

TrainState make_state(const model::ModelConfig& model_cfg, std::uint64_t seed) {
  TrainState s;
  s.model = std::make_unique<model::Model<float>>(model_cfg, seed);
  for (auto* p : s.model->parameters()) s.adam[p->name] = AdamSlot{Tensor<float>(p->value.shape()), Tensor<float>(p->value.shape()), 0};
  return s;
}

losses::FeatureExtractor<float> make_feature_extractor(const TrainConfig& cfg) {
  losses::FeatureExtractor<float> phi(cfg.phi_seed);
  if (!cfg.phi_weights.empty()) phi.load(cfg.phi_weights);
  return phi;
}

namespace {

/// Forward + loss for every sample; accumulates parameter gradients when
/// `backward` is set.
StepResult run_batch(model::Model<float>& model, const data::Batch& batch, const TrainConfig& cfg,
                     const losses::FeatureExtractor<float>& phi, bool backward) {
  StepResult r;
  r.kind = batch.kind();
  const auto routing = model::Routing::train(r.kind);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Graph<float> g(backward);
    auto x = g.constant(batch.degraded[i].cast<float>());
    auto y = g.constant(batch.clean[i].cast<float>());
    auto out = model.forward(g, x, routing);
    auto terms = losses::total_loss(out.restored, out.edge_map, y, x, phi, cfg.loss, cfg.contrastive_reduction);
    r.mae += terms.mae * inv;
    r.contrastive += terms.contrastive * inv;
    r.edge += terms.edge * inv;
    r.total += static_cast<double>(terms.total.item()) * inv;
    if (backward) g.backward(ops::scale(terms.total, static_cast<float>(inv)));
  }
  return r;
}

}  // namespace

StepResult evaluate_batch(model::Model<float>& model, const data::Batch& batch, const TrainConfig& cfg,
                          const losses::FeatureExtractor<float>& phi) {
  return run_batch(model, batch, cfg, phi, false);
}

StepResult train_step(TrainState& state, const data::Batch& batch, double lr, const TrainConfig& cfg,
                      const losses::FeatureExtractor<float>& phi) {
  const Kind kind = batch.kind();
  auto& model = *state.model;
  const auto params = model.routed_parameters(model::Routing::train(kind));
  for (auto* p : params) p->zero_grad();

  StepResult r = run_batch(model, batch, cfg, phi, true);
  r.lr = lr;

  double sq = 0;
  for (auto* p : params)
    for (float g : p->grad.span()) sq += static_cast<double>(g) * g;
  r.grad_norm = std::sqrt(sq);
  if (cfg.grad_clip > 0 && r.grad_norm > cfg.grad_clip) {
    const auto s = static_cast<float>(cfg.grad_clip / r.grad_norm);
    for (auto* p : params)
      for (float& g : p->grad.span()) g *= s;
  }

  const auto b1 = static_cast<float>(cfg.adam_beta1), b2 = static_cast<float>(cfg.adam_beta2);
  const auto eps = static_cast<float>(cfg.adam_epsilon);
  const auto step_lr = static_cast<float>(lr);
  for (auto* p : params) {
    AdamSlot& slot = state.adam.at(p->name);
    ++slot.step;
    const auto c1 = static_cast<float>(1.0 - std::pow(cfg.adam_beta1, static_cast<double>(slot.step)));
    const auto c2 = static_cast<float>(1.0 - std::pow(cfg.adam_beta2, static_cast<double>(slot.step)));
    float* w = p->value.data();
    float* m = slot.m.data();
    float* v = slot.v.data();
    const float* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const float mh = m[i] / c1;
      const float vh = v[i] / c2;
      w[i] -= step_lr * mh / (std::sqrt(vh) + eps);
    }
  }
  ++state.step;
  return r;
}

Image restore_image(model::Model<float>& model, const Image& degraded, const model::Routing& routing) {
  ad::Graph<float> g(false);
  auto out = model.forward(g, g.constant(degraded.cast<float>()), routing);
  return out.restored.value().cast<double>();
}

double dataset_mae(model::Model<float>& model, const std::vector<data::Sample>& samples,
                   const std::function<model::Routing(Kind)>& routing_for) {
  if (samples.empty()) throw std::invalid_argument("dataset_mae: no samples");
  double total = 0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    const Image r = restore_image(model, s.degraded, routing_for(s.kind));
    for (std::size_t i = 0; i < r.size(); ++i) total += std::abs(r[i] - s.clean[i]);
    count += r.size();
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const fs::path& path) {
  io::Archive a;
  json steps = json::object();
  for (const auto& [name, slot] : state.adam) steps[name] = slot.step;
  a.manifest = {{"format", "usrnet-checkpoint"},
                {"model", to_json(state.model->config())},
                {"train_config", to_json(cfg)},
                {"counters", {{"epoch", state.epoch}, {"batch_in_epoch", state.batch_in_epoch}, {"step", state.step}}},
                {"adam_steps", steps}};
  auto add = [&a](const std::string& name, const std::vector<std::int64_t>& dims, const Tensor<float>& t) {
    a.entries.push_back({name, dims, std::vector<float>(t.data(), t.data() + t.size())});
  };
  for (auto* p : state.model->parameters()) {
    const AdamSlot& slot = state.adam.at(p->name);
    add("param/" + p->name, p->dims, p->value);
    add("adam_m/" + p->name, p->dims, slot.m);
    add("adam_v/" + p->name, p->dims, slot.v);
  }
  io::write_archive(path, a);
}

void load_checkpoint_into(TrainState& state, const fs::path& path) {
  const io::Archive a = io::read_archive(path);
  const std::string origin = path.string();
  if (a.manifest.value("format", "") != "usrnet-checkpoint") throw std::runtime_error(origin + ": not a training checkpoint");

  // Validate everything before touching the state.
  std::set<std::string> expected;
  auto params = state.model->parameters();
  for (auto* p : params) {
    for (const char* prefix : {"param/", "adam_m/", "adam_v/"}) {
      const std::string name = prefix + p->name;
      expected.insert(name);
      const io::ArchiveEntry* e = a.find(name);
      if (e == nullptr) throw std::runtime_error(origin + ": missing entry '" + name + "'");
      if (e->dims != p->dims) {
        std::ostringstream msg;
        msg << origin << ": entry '" << name << "' has shape [";
        for (std::size_t i = 0; i < e->dims.size(); ++i) msg << (i ? "," : "") << e->dims[i];
        msg << "], model expects [";
        for (std::size_t i = 0; i < p->dims.size(); ++i) msg << (i ? "," : "") << p->dims[i];
        msg << "]";
        throw std::runtime_error(msg.str());
      }
    }
  }
  for (const auto& e : a.entries)
    if (!expected.count(e.name)) throw std::runtime_error(origin + ": unexpected entry '" + e.name + "'");
  const json& steps = a.manifest.at("adam_steps");
  for (auto* p : params)
    if (!steps.contains(p->name)) throw std::runtime_error(origin + ": missing optimizer step count for '" + p->name + "'");

  for (auto* p : params) {
    AdamSlot& slot = state.adam.at(p->name);
    std::copy_n(a.find("param/" + p->name)->data.begin(), p->value.size(), p->value.data());
    std::copy_n(a.find("adam_m/" + p->name)->data.begin(), slot.m.size(), slot.m.data());
    std::copy_n(a.find("adam_v/" + p->name)->data.begin(), slot.v.size(), slot.v.data());
    slot.step = steps.at(p->name).get<std::int64_t>();
    p->zero_grad();
  }
  const json& c = a.manifest.at("counters");
  state.epoch = c.at("epoch").get<int>();
  state.batch_in_epoch = c.at("batch_in_epoch").get<std::int64_t>();
  state.step = c.at("step").get<std::int64_t>();
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const io::Archive a = io::read_archive(path);
  if (a.manifest.value("format", "") != "usrnet-checkpoint") throw std::runtime_error(path.string() + ": not a training checkpoint");
  LoadedCheckpoint out;
  out.config = config_from_json(a.manifest.at("train_config"));
  const model::ModelConfig m = model_config_from_json(a.manifest.at("model"));
  out.state = make_state(m, 0);
  load_checkpoint_into(out.state, path);
  return out;
}

// ---------------------------------------------------------------------------
// Loop

namespace {

std::string bank_string(const std::vector<Kind>& bank) {
  std::string s = "[";
  for (std::size_t i = 0; i < bank.size(); ++i) s += (i ? "," : "") + std::string(kind_name(bank[i]));
  return s + "]";
}

/// Drops log rows past `step` (left behind by an interrupted run).
void truncate_log(const fs::path& path, std::int64_t step) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

TrainSummary train(const TrainConfig& cfg, const fs::path& manifest, const TrainOptions& options) {
  const auto entries = data::load_manifest(manifest);
  std::vector<data::Sample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) samples.push_back(data::realize(e));
  return train(cfg, samples, options);
}

TrainSummary train(const TrainConfig& cfg, const std::vector<data::Sample>& samples, const TrainOptions& options) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("train: no samples");
  if (options.out_dir.empty()) throw std::invalid_argument("train: no output directory");
  fs::create_directories(options.out_dir);

  TrainSummary summary;
  summary.checkpoint = options.out_dir / kCheckpointName;
  summary.loss_log = options.out_dir / kLossLogName;

  std::ofstream run_log(options.out_dir / kRunLogName, options.resume ? std::ios::app : std::ios::trunc);
  auto log = [&](const std::string& msg) {
    run_log << msg << '\n';
    run_log.flush();
    if (options.log) options.log(msg);
  };

  const auto kinds = data::kinds_present(samples);
  const model::ModelConfig model_cfg = effective_model_config(cfg, kinds);
  TrainState state = make_state(model_cfg, cfg.seed);
  for (Kind k : kinds) (void)state.model->bank.route(model::Routing::train(k));

  log("config " + to_json(cfg).dump());
  log("model mode=" + mode_name(cfg.mode) + " bank=" + bank_string(model_cfg.bank) +
      " dres=" + nn::describe(model_cfg.dres) + " dilation_rate=" + std::to_string(model_cfg.dilation_rate) +
      " channels=" + to_json(model_cfg).at("channels").dump());
  log("data samples=" + std::to_string(samples.size()) + " kinds=" + bank_string(kinds));

  if (options.resume) {
    load_checkpoint_into(state, summary.checkpoint);
    truncate_log(summary.loss_log, state.step);
    log("resume epoch=" + std::to_string(state.epoch) + " batch=" + std::to_string(state.batch_in_epoch) +
        " step=" + std::to_string(state.step));
  } else {
    std::ofstream csv(summary.loss_log, std::ios::trunc);
    csv << "step,epoch,kind,mae,contrastive,edge,total,lr\n";
  }
  std::ofstream csv(summary.loss_log, std::ios::app);

  const auto phi = make_feature_extractor(cfg);
  const data::BatchOptions bopt{cfg.patch, cfg.batch_size, rnd::derive(cfg.seed, 0xda7a), cfg.hflip};
  bool stopped = false;
  for (; state.epoch < cfg.epochs && !stopped; ++state.epoch, state.batch_in_epoch = 0) {
    const auto batches = data::epoch_batches(samples, bopt, state.epoch);
    const double lr = lr_at(state.epoch, cfg);
    double epoch_total = 0;
    std::int64_t epoch_steps = 0;
    for (auto b = static_cast<std::size_t>(state.batch_in_epoch); b < batches.size(); ++b) {
      if (cfg.max_steps > 0 && state.step >= cfg.max_steps) {
        stopped = true;
        break;
      }
      const StepResult r = train_step(state, batches[b], lr, cfg, phi);
      state.batch_in_epoch = static_cast<std::int64_t>(b) + 1;
      char row[256];
      std::snprintf(row, sizeof row, "%lld,%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(state.step), state.epoch,
                    std::string(kind_name(r.kind)).c_str(), r.mae, r.contrastive, r.edge, r.total, r.lr);
      csv << row;
      csv.flush();
      epoch_total += r.total;
      ++epoch_steps;
      if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) save_checkpoint(state, cfg, summary.checkpoint);
    }
    if (stopped) break;
    if (epoch_steps > 0) {
      char msg[160];
      std::snprintf(msg, sizeof msg, "epoch %d steps=%lld mean_total=%.6f lr=%.3g", state.epoch,
                    static_cast<long long>(state.step), epoch_total / static_cast<double>(epoch_steps), lr);
      log(msg);
    }
  }
  save_checkpoint(state, cfg, summary.checkpoint);
  summary.steps = state.step;
  summary.epochs_completed = state.epoch;
  log("done steps=" + std::to_string(state.step) + " checkpoint=" + summary.checkpoint.string());
  return summary;
}

}  // namespace usrnet::train
