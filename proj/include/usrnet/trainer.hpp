// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop: per-kind node routing, Adam with moments partitioned
// like the parameters, step-decay schedule, loss log and checkpoints.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "usrnet/data.hpp"
#include "usrnet/losses.hpp"
#include "usrnet/model.hpp"

namespace usrnet::train {

namespace fs = std::filesystem;

enum class TrainMode { all_in_one, one_to_one };

std::string mode_name(TrainMode m);
TrainMode parse_mode(const std::string& s);

struct TrainConfig {
  int epochs = 100;
  double base_lr = 1e-3;
  double decay_factor = 0.1;
  int decay_every = 40;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Global gradient-norm bound; <= 0 disables clipping.
  double grad_clip = 1.0;
  losses::LossWeights loss;
  losses::Reduction contrastive_reduction = losses::Reduction::mean;
  std::uint64_t phi_seed = 0x9e3779b97f4a7c15ULL;
  /// Archive with pretrained feature-extractor weights; empty = seeded random.
  std::string phi_weights;
  int batch_size = 4;
  int patch = 64;
  bool hflip = false;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::all_in_one;
  model::ModelConfig model;
  /// Stop after this many optimizer steps in total; 0 = run every epoch.
  std::int64_t max_steps = 0;
  /// Write a checkpoint every this many steps; 0 = only at the end.
  std::int64_t checkpoint_every = 0;

  void validate() const;
};

/// Config parse failure naming the offending (dotted) key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& msg) : std::invalid_argument(msg), key_(key) {}
  [[nodiscard]] const std::string& key() const { return key_; }

 private:
  std::string key_;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Overlays `j` on `base`. Unknown keys and wrongly typed values throw ConfigError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

/// base_lr * decay_factor^floor(epoch / decay_every); throws outside [0, epochs).
double lr_at(int epoch, const TrainConfig& cfg);

/// The architecture actually trained: one_to_one gives every kind present in
/// the data its own node; all_in_one keeps the configured bank.
model::ModelConfig effective_model_config(const TrainConfig& cfg, const std::vector<Kind>& data_kinds);

struct AdamSlot {
  Tensor<float> m;
  Tensor<float> v;
  std::int64_t step = 0;
};

struct TrainState {
  std::unique_ptr<model::Model<float>> model;
  std::map<std::string, AdamSlot> adam;
  int epoch = 0;                   ///< epoch in progress
  std::int64_t batch_in_epoch = 0; ///< batches of `epoch` already consumed
  std::int64_t step = 0;           ///< optimizer steps taken

  TrainState() = default;
  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;
};

/// Fresh model (seeded by cfg.seed) with zeroed optimizer moments.
TrainState make_state(const model::ModelConfig& model_cfg, std::uint64_t seed);

struct StepResult {
  Kind kind = Kind::haze;
  double mae = 0;
  double contrastive = 0;
  double edge = 0;
  double total = 0;
  double lr = 0;
  double grad_norm = 0;
};

/// One Adam step on a kind-uniform batch under train(kind) routing. Only the
/// shared parameters and the routed node(s) change; every other node's
/// parameters and moments stay untouched. Increments state.step.
StepResult train_step(TrainState& state, const data::Batch& batch, double lr, const TrainConfig& cfg,
                      const losses::FeatureExtractor<float>& phi);

/// Loss terms of `batch` under train(kind) routing without updating anything.
StepResult evaluate_batch(model::Model<float>& model, const data::Batch& batch, const TrainConfig& cfg,
                          const losses::FeatureExtractor<float>& phi);

losses::FeatureExtractor<float> make_feature_extractor(const TrainConfig& cfg);

/// Full-image restoration of a sample.
Image restore_image(model::Model<float>& model, const Image& degraded, const model::Routing& routing);

/// Mean per-pixel absolute error over `samples`, restoring each one under
/// `routing_for(sample.kind)`.
double dataset_mae(model::Model<float>& model, const std::vector<data::Sample>& samples,
                   const std::function<model::Routing(Kind)>& routing_for);

// ---------------------------------------------------------------------------

/// Writes parameters, optimizer moments, counters and both configs.
void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const fs::path& path);

struct LoadedCheckpoint {
  TrainState state;
  TrainConfig config;
};

/// Rebuilds the model from the checkpoint's own manifest.
LoadedCheckpoint load_checkpoint(const fs::path& path);

/// Loads into an existing state; every entry must exist with the expected
/// shape and nothing may be left over. Throws std::runtime_error naming the
/// entry. `state` is unchanged on failure.
void load_checkpoint_into(TrainState& state, const fs::path& path);

// ---------------------------------------------------------------------------

struct TrainOptions {
  fs::path out_dir;
  bool resume = false;
  std::function<void(const std::string&)> log;
};

struct TrainSummary {
  std::int64_t steps = 0;
  int epochs_completed = 0;
  fs::path checkpoint;
  fs::path loss_log;
};

inline constexpr const char* kCheckpointName = "checkpoint.usrn";
inline constexpr const char* kLossLogName = "loss.csv";
inline constexpr const char* kRunLogName = "run.log";

/// Trains on the realized samples of `manifest` and writes
/// <out_dir>/checkpoint.usrn, loss.csv and run.log.
TrainSummary train(const TrainConfig& cfg, const fs::path& manifest, const TrainOptions& options);

/// Same, on samples already in memory.
TrainSummary train(const TrainConfig& cfg, const std::vector<data::Sample>& samples, const TrainOptions& options);

}  // namespace usrnet::train
