// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// The restoration network: scene encoder, per-degradation node bank, edge
// decoder and scene restorer, composed by Model::forward().

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "usrnet/kinds.hpp"
#include "usrnet/nn_blocks.hpp"

namespace usrnet::model {

using ad::Graph;
using ad::Var;
using nn::ParamList;

struct ModelConfig {
  /// Feature channels of the four encoder stages.
  std::array<int, 4> channels{16, 32, 64, 128};
  /// Node bank entries; inference chains them with the first entry outermost.
  std::vector<Kind> bank{Kind::haze, Kind::rain, Kind::snow};
  nn::DResComponents dres{};
  int dilation_rate = 2;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Validates channel counts and bank uniqueness; throws std::invalid_argument.
void validate(const ModelConfig& cfg);

/// How the node bank is traversed.
class Routing {
 public:
  enum class Mode { train, infer, single };

  /// Training on batches of `kind`: only that kind's node(s) run.
  static Routing train(Kind kind) { return Routing(Mode::train, kind); }
  /// Every node, chained in bank order.
  static Routing infer() { return Routing(Mode::infer, Kind::haze); }
  /// Inference with only the node(s) of `kind` retained (one-to-one ablation).
  static Routing single(Kind kind) { return Routing(Mode::single, kind); }

  [[nodiscard]] Mode mode() const { return mode_; }
  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] std::string describe() const;

 private:
  Routing(Mode m, Kind k) : mode_(m), kind_(k) {}
  Mode mode_;
  Kind kind_;
};

template <class T>
struct EncoderFeatures {
  std::array<Var<T>, 4> global;  ///< pyramid at scales 1, 1/2, 1/4, 1/8
  std::array<Var<T>, 4> edge;    ///< per-stage edge taps
};

template <class T>
struct EdgeDecoding {
  Var<T> edge_map;                 ///< 1 x H x W
  std::array<Var<T>, 4> features;  ///< decoder state per scale
};

template <class T>
struct RestorationOutput {
  Var<T> restored;  ///< 3 x H x W in [0, 1]
  Var<T> edge_map;  ///< 1 x H x W
};

template <class T>
class Encoder {
 public:
  Encoder(const ModelConfig& cfg);
  EncoderFeatures<T> forward(Graph<T>& g, const Var<T>& image);
  void collect(ParamList<T>& out);

  std::array<nn::DResBlock<T>, 4> stages;
};

/// One bank entry: x + SCL(GCA(SCL(x))).
template <class T>
class NilmNode {
 public:
  NilmNode(const std::string& name, int channels);
  Var<T> forward(Graph<T>& g, const Var<T>& x);
  void collect(ParamList<T>& out);
  /// Test hook: zero the last normalization gain so the node is the identity.
  void make_identity();

  nn::SCL<T> scl_in;
  nn::GCA<T> gca;
  nn::SCL<T> scl_out;
};

template <class T>
class NodeBank {
 public:
  NodeBank(const std::vector<Kind>& kinds, int channels);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const std::vector<Kind>& kinds() const { return kinds_; }
  [[nodiscard]] bool contains(Kind k) const;
  NilmNode<T>& node(Kind k);
  NilmNode<T>& node_at(std::size_t i) { return *nodes_.at(i); }

  /// Bank indices used by `routing`, outermost first. A mixed kind without its
  /// own node routes through the nodes of its components. Throws on a kind
  /// the bank cannot serve.
  [[nodiscard]] std::vector<std::size_t> route(const Routing& routing) const;

  /// Applies the routed nodes innermost first, so the result is
  /// node[r0](node[r1](...node[rn](x)...)).
  Var<T> forward(Graph<T>& g, const Var<T>& x, const Routing& routing);

  /// Called with the kind of every node as it is applied.
  std::function<void(Kind)> on_node_call;

  void collect(ParamList<T>& out);

 private:
  std::vector<Kind> kinds_;
  std::vector<std::unique_ptr<NilmNode<T>>> nodes_;
};

template <class T>
class EdgeDecoder {
 public:
  EdgeDecoder(const ModelConfig& cfg);
  EdgeDecoding<T> forward(Graph<T>& g, const EncoderFeatures<T>& enc);
  void collect(ParamList<T>& out);

  std::array<nn::SResBlock<T>, 4> blocks;
  std::array<nn::Conv2d<T>, 3> lift;  ///< 1x1, scale k+1 channels -> scale k channels
  nn::Conv2d<T> head;                 ///< 3x3, c0 -> 1
};

template <class T>
class SceneRestorer {
 public:
  SceneRestorer(const ModelConfig& cfg);
  Var<T> forward(Graph<T>& g, const EncoderFeatures<T>& enc, const EdgeDecoding<T>& edges, const Var<T>& nilm);
  void collect(ParamList<T>& out);

  std::array<nn::Conv2d<T>, 4> fuse;  ///< 1x1 aggregation per scale
  std::array<nn::SResBlock<T>, 4> blocks;
  nn::Conv2d<T> head;  ///< 3x3, c0 -> 3
};

/// The assembled network. Not copyable or movable: graphs keep raw pointers
/// to its parameters.
template <class T>
class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  /// Requires spatial extents that are multiples of 8 and at least 16.
  EncoderFeatures<T> encode(Graph<T>& g, const Var<T>& image);
  Var<T> nilm_forward(Graph<T>& g, const Var<T>& features, const Routing& routing);
  EdgeDecoding<T> decode_edges(Graph<T>& g, const EncoderFeatures<T>& enc);
  Var<T> restore(Graph<T>& g, const EncoderFeatures<T>& enc, const EdgeDecoding<T>& edges, const Var<T>& nilm);

  /// Full pipeline on any image of at least 16x16: reflect-pads to a multiple
  /// of 8, runs encode -> node bank -> edge decoder -> restorer, and crops back.
  RestorationOutput<T> forward(Graph<T>& g, const Var<T>& image, const Routing& routing);

  /// Encoder, edge decoder and restorer parameters.
  ParamList<T> shared_parameters();
  /// Parameters of the bank node for `k` only.
  ParamList<T> node_parameters(Kind k);
  /// Parameters touched by a forward pass under `routing`.
  ParamList<T> routed_parameters(const Routing& routing);
  ParamList<T> parameters();

  void initialize(std::uint64_t seed);

  Encoder<T> encoder;
  NodeBank<T> bank;
  EdgeDecoder<T> edge_decoder;
  SceneRestorer<T> restorer;

 private:
  ModelConfig cfg_;
};

}  // namespace usrnet::model
