// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: pixel MAE, Laplacian edge loss, the layer-weighted
// contrastive ratio over a frozen feature pyramid, and their combination.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "usrnet/nn_blocks.hpp"

namespace usrnet::losses {

using ad::Graph;
using ad::Var;

struct LossWeights {
  double gamma1 = 0.85;       ///< MAE
  double gamma2 = 0.15;       ///< contrastive
  double lambda_edge = 0.1;   ///< edge prediction
  double epsilon = 1e-7;      ///< contrastive denominator guard

  void validate() const;
};

/// How feature-space L1 distances are reduced.
enum class Reduction { mean, sum };

Reduction parse_reduction(const std::string& s);
std::string reduction_name(Reduction r);

inline constexpr std::array<double, 5> kLayerWeights{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};

/// Frozen five-stage conv + ReLU pyramid with a tap after every stage and a
/// 2x2 max-pool between stages. Its weights enter graphs as constants.
template <class T>
class FeatureExtractor {
 public:
  static constexpr std::array<int, 5> kDefaultChannels{16, 32, 32, 64, 64};

  explicit FeatureExtractor(std::uint64_t seed = 0x9e3779b97f4a7c15ULL, std::array<int, 5> channels = kDefaultChannels);

  /// Replaces the weights with entries "phi.stage<k>.weight|bias" of an archive.
  void load(const std::filesystem::path& path);

  [[nodiscard]] std::vector<Var<T>> features(Graph<T>& g, const Var<T>& image) const;
  [[nodiscard]] std::size_t taps() const { return stages_.size(); }
  [[nodiscard]] const std::vector<double>& layer_weights() const { return weights_; }
  /// Test hook: override the tap weights.
  void set_layer_weights(std::vector<double> w) { weights_ = std::move(w); }

  [[nodiscard]] std::vector<nn::Conv2d<T>>& stages() { return stages_; }

 private:
  std::vector<nn::Conv2d<T>> stages_;
  std::vector<double> weights_;
};

template <class T>
Var<T> mae_loss(const Var<T>& restored, const Var<T>& target);

/// mae(Lap(a), Lap(b)).
template <class T>
Var<T> edge_loss(const Var<T>& a, const Var<T>& b);

/// Edge supervision for a 3-channel target: Lap(luminance(target)).
template <class T>
Var<T> edge_target(const Var<T>& target);

template <class T>
Var<T> contrastive_loss(const Var<T>& restored, const Var<T>& target, const Var<T>& degraded, const FeatureExtractor<T>& phi,
                        double epsilon = 1e-7, Reduction reduction = Reduction::mean);

template <class T>
struct LossTerms {
  Var<T> total;
  double mae = 0;
  double contrastive = 0;
  double edge = 0;
};

/// gamma1 * mae(restored, target) + gamma2 * contrastive
///   + lambda_edge * mae(edge_pred, Lap(luminance(target))).
template <class T>
LossTerms<T> total_loss(const Var<T>& restored, const Var<T>& edge_pred, const Var<T>& target, const Var<T>& degraded,
                        const FeatureExtractor<T>& phi, const LossWeights& weights, Reduction reduction = Reduction::mean);

}  // namespace usrnet::losses
