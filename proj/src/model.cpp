// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/model.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace usrnet::model {

void validate(const ModelConfig& cfg) {
  for (int c : cfg.channels)
    if (c < 2) throw std::invalid_argument("model: every stage needs at least 2 channels");
  if (cfg.bank.empty()) throw std::invalid_argument("model: node bank is empty");
  std::set<Kind> seen;
  for (Kind k : cfg.bank)
    if (!seen.insert(k).second) throw std::invalid_argument("model: duplicate bank kind " + std::string(kind_name(k)));
  if (cfg.dilation_rate < 1) throw std::invalid_argument("model: dilation rate must be >= 1");
}

std::string Routing::describe() const {
  switch (mode_) {
    case Mode::train: return "train(" + std::string(kind_name(kind_)) + ")";
    case Mode::single: return "single(" + std::string(kind_name(kind_)) + ")";
    case Mode::infer: break;
  }
  return "infer";
}

// ---------------------------------------------------------------------------

template <class T>
Encoder<T>::Encoder(const ModelConfig& cfg)
    : stages{nn::DResBlock<T>("encoder.stage0", 3, cfg.channels[0], cfg.dres, cfg.dilation_rate),
             nn::DResBlock<T>("encoder.stage1", cfg.channels[0], cfg.channels[1], cfg.dres, cfg.dilation_rate),
             nn::DResBlock<T>("encoder.stage2", cfg.channels[1], cfg.channels[2], cfg.dres, cfg.dilation_rate),
             nn::DResBlock<T>("encoder.stage3", cfg.channels[2], cfg.channels[3], cfg.dres, cfg.dilation_rate)} {}

template <class T>
EncoderFeatures<T> Encoder<T>::forward(Graph<T>& g, const Var<T>& image) {
  EncoderFeatures<T> f;
  Var<T> x = image;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    auto out = stages[s].forward(g, x);
    f.global[s] = out.global;
    f.edge[s] = out.edge;
    if (s + 1 < stages.size()) x = ops::max_pool2(out.global);
  }
  return f;
}

template <class T>
void Encoder<T>::collect(ParamList<T>& out) {
  for (auto& s : stages) s.collect(out);
}

// ---------------------------------------------------------------------------

template <class T>
NilmNode<T>::NilmNode(const std::string& name, int channels)
    : scl_in(name + ".scl_in", channels, channels), gca(name + ".gca", channels), scl_out(name + ".scl_out", channels, channels) {}

template <class T>
Var<T> NilmNode<T>::forward(Graph<T>& g, const Var<T>& x) {
  return ops::add(x, scl_out.forward(g, gca.forward(g, scl_in.forward(g, x))));
}

template <class T>
void NilmNode<T>::collect(ParamList<T>& out) {
  scl_in.collect(out);
  gca.collect(out);
  scl_out.collect(out);
}

template <class T>
void NilmNode<T>::make_identity() {
  scl_out.norm.gamma.value.fill(T(0));
  scl_out.norm.beta.value.fill(T(0));
}

template <class T>
NodeBank<T>::NodeBank(const std::vector<Kind>& kinds, int channels) : kinds_(kinds) {
  for (Kind k : kinds) nodes_.push_back(std::make_unique<NilmNode<T>>("nilm." + std::string(kind_name(k)), channels));
}

template <class T>
bool NodeBank<T>::contains(Kind k) const {
  return std::find(kinds_.begin(), kinds_.end(), k) != kinds_.end();
}

template <class T>
NilmNode<T>& NodeBank<T>::node(Kind k) {
  auto it = std::find(kinds_.begin(), kinds_.end(), k);
  if (it == kinds_.end()) throw std::invalid_argument("node bank has no node for kind " + std::string(kind_name(k)));
  return *nodes_[static_cast<std::size_t>(it - kinds_.begin())];
}

template <class T>
std::vector<std::size_t> NodeBank<T>::route(const Routing& routing) const {
  std::vector<std::size_t> idx;
  if (routing.mode() == Routing::Mode::infer) {
    for (std::size_t i = 0; i < kinds_.size(); ++i) idx.push_back(i);
    return idx;
  }
  const Kind k = routing.kind();
  auto position = [this](Kind want) -> std::ptrdiff_t {
    auto it = std::find(kinds_.begin(), kinds_.end(), want);
    return it == kinds_.end() ? -1 : it - kinds_.begin();
  };
  if (auto p = position(k); p >= 0) return {static_cast<std::size_t>(p)};
  if (is_mixed(k)) {
    for (Kind part : components(k)) {
      const auto p = position(part);
      if (p < 0) break;
      idx.push_back(static_cast<std::size_t>(p));
    }
    if (idx.size() == components(k).size()) {
      std::sort(idx.begin(), idx.end());
      return idx;
    }
  }
  throw std::invalid_argument("node bank cannot route kind " + std::string(kind_name(k)));
}

template <class T>
Var<T> NodeBank<T>::forward(Graph<T>& g, const Var<T>& x, const Routing& routing) {
  const auto idx = route(routing);
  Var<T> y = x;
  for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
    if (on_node_call) on_node_call(kinds_[*it]);
    y = nodes_[*it]->forward(g, y);
  }
  return y;
}

template <class T>
void NodeBank<T>::collect(ParamList<T>& out) {
  for (auto& n : nodes_) n->collect(out);
}

// ---------------------------------------------------------------------------

template <class T>
EdgeDecoder<T>::EdgeDecoder(const ModelConfig& cfg)
    : blocks{nn::SResBlock<T>("edge.block0", cfg.channels[0]), nn::SResBlock<T>("edge.block1", cfg.channels[1]),
             nn::SResBlock<T>("edge.block2", cfg.channels[2]), nn::SResBlock<T>("edge.block3", cfg.channels[3])},
      lift{nn::Conv2d<T>("edge.lift0", cfg.channels[1], cfg.channels[0], 1),
           nn::Conv2d<T>("edge.lift1", cfg.channels[2], cfg.channels[1], 1),
           nn::Conv2d<T>("edge.lift2", cfg.channels[3], cfg.channels[2], 1)},
      head("edge.head", cfg.channels[0], 1, 3) {}

template <class T>
EdgeDecoding<T> EdgeDecoder<T>::forward(Graph<T>& g, const EncoderFeatures<T>& enc) {
  for (std::size_t s = 0; s < 4; ++s) {
    if (!enc.edge[s].defined()) throw std::invalid_argument("edge decoder: missing edge tap " + std::to_string(s));
    const Shape& es = enc.edge[s].shape();
    if (es.c != blocks[s].conv1.in_channels()) throw std::invalid_argument("edge decoder: wrong channel count at scale " + std::to_string(s));
    if (s > 0) {
      const Shape& prev = enc.edge[s - 1].shape();
      if (es.h * 2 != prev.h || es.w * 2 != prev.w) {
        throw std::invalid_argument("edge decoder: pyramid level " + std::to_string(s) + " is not half of level " +
                                    std::to_string(s - 1));
      }
    }
  }
  EdgeDecoding<T> out;
  out.features[3] = blocks[3].forward(g, enc.edge[3]);
  for (int s = 2; s >= 0; --s) {
    Var<T> up = lift[static_cast<std::size_t>(s)].forward(g, ops::upsample2(out.features[static_cast<std::size_t>(s) + 1]));
    out.features[static_cast<std::size_t>(s)] = blocks[static_cast<std::size_t>(s)].forward(g, ops::add(up, enc.edge[static_cast<std::size_t>(s)]));
  }
  out.edge_map = head.forward(g, out.features[0]);
  return out;
}

template <class T>
void EdgeDecoder<T>::collect(ParamList<T>& out) {
  for (auto& b : blocks) b.collect(out);
  for (auto& l : lift) l.collect(out);
  head.collect(out);
}

// ---------------------------------------------------------------------------

template <class T>
SceneRestorer<T>::SceneRestorer(const ModelConfig& cfg)
    : fuse{nn::Conv2d<T>("restorer.fuse0", cfg.channels[1] + 2 * cfg.channels[0] + cfg.channels[3] + 1, cfg.channels[0], 1),
           nn::Conv2d<T>("restorer.fuse1", cfg.channels[2] + 2 * cfg.channels[1] + cfg.channels[3], cfg.channels[1], 1),
           nn::Conv2d<T>("restorer.fuse2", cfg.channels[3] + 2 * cfg.channels[2] + cfg.channels[3], cfg.channels[2], 1),
           nn::Conv2d<T>("restorer.fuse3", 3 * cfg.channels[3], cfg.channels[3], 1)},
      blocks{nn::SResBlock<T>("restorer.block0", cfg.channels[0]), nn::SResBlock<T>("restorer.block1", cfg.channels[1]),
             nn::SResBlock<T>("restorer.block2", cfg.channels[2]), nn::SResBlock<T>("restorer.block3", cfg.channels[3])},
      head("restorer.head", cfg.channels[0], 3, 3) {}

template <class T>
Var<T> SceneRestorer<T>::forward(Graph<T>& g, const EncoderFeatures<T>& enc, const EdgeDecoding<T>& edges, const Var<T>& nilm) {
  const Shape& bottom = enc.global[3].shape();
  if (nilm.shape() != bottom) {
    throw std::invalid_argument("restorer: bank output " + to_string(nilm.shape()) + " does not match bottleneck " +
                                to_string(bottom));
  }
  Var<T> context = nilm;
  Var<T> state = blocks[3].forward(g, fuse[3].forward(g, ops::concat_channels<T>({enc.global[3], edges.features[3], nilm})));
  for (int s = 2; s >= 0; --s) {
    const auto i = static_cast<std::size_t>(s);
    context = ops::upsample2(context);
    std::vector<Var<T>> parts{ops::upsample2(state), enc.global[i], edges.features[i], context};
    if (s == 0) parts.push_back(edges.edge_map);
    state = blocks[i].forward(g, fuse[i].forward(g, ops::concat_channels(parts)));
  }
  return ops::sigmoid(head.forward(g, state));
}

template <class T>
void SceneRestorer<T>::collect(ParamList<T>& out) {
  for (auto& f : fuse) f.collect(out);
  for (auto& b : blocks) b.collect(out);
  head.collect(out);
}

// ---------------------------------------------------------------------------

template <class T>
Model<T>::Model(ModelConfig cfg, std::uint64_t seed)
    : encoder((validate(cfg), cfg)), bank(cfg.bank, cfg.channels[3]), edge_decoder(cfg), restorer(cfg), cfg_(std::move(cfg)) {
  initialize(seed);
}

template <class T>
EncoderFeatures<T> Model<T>::encode(Graph<T>& g, const Var<T>& image) {
  const Shape& s = image.shape();
  if (s.c != 3) throw std::invalid_argument("encode: expected a 3-channel image, got " + to_string(s));
  if (s.h < 16 || s.w < 16 || s.h % 8 != 0 || s.w % 8 != 0) {
    throw std::invalid_argument("encode: extents must be multiples of 8 and at least 16, got " + to_string(s));
  }
  return encoder.forward(g, image);
}

template <class T>
Var<T> Model<T>::nilm_forward(Graph<T>& g, const Var<T>& features, const Routing& routing) {
  return bank.forward(g, features, routing);
}

template <class T>
EdgeDecoding<T> Model<T>::decode_edges(Graph<T>& g, const EncoderFeatures<T>& enc) {
  return edge_decoder.forward(g, enc);
}

template <class T>
Var<T> Model<T>::restore(Graph<T>& g, const EncoderFeatures<T>& enc, const EdgeDecoding<T>& edges, const Var<T>& nilm) {
  return restorer.forward(g, enc, edges, nilm);
}

template <class T>
RestorationOutput<T> Model<T>::forward(Graph<T>& g, const Var<T>& image, const Routing& routing) {
  const Shape s = image.shape();
  if (s.c != 3) throw std::invalid_argument("forward: expected a 3-channel image, got " + to_string(s));
  if (s.h < 16 || s.w < 16) throw std::invalid_argument("forward: image must be at least 16x16, got " + to_string(s));
  const int pad_h = (8 - s.h % 8) % 8;
  const int pad_w = (8 - s.w % 8) % 8;
  const bool padded = pad_h != 0 || pad_w != 0;
  Var<T> x = padded ? ops::reflect_pad(image, pad_h, pad_w) : image;

  EncoderFeatures<T> enc = encode(g, x);
  Var<T> nilm = nilm_forward(g, enc.global[3], routing);
  EdgeDecoding<T> edges = decode_edges(g, enc);
  Var<T> restored = restore(g, enc, edges, nilm);

  RestorationOutput<T> out{restored, edges.edge_map};
  if (padded) {
    out.restored = ops::crop(restored, 0, 0, s.h, s.w);
    out.edge_map = ops::crop(edges.edge_map, 0, 0, s.h, s.w);
  }
  return out;
}

template <class T>
ParamList<T> Model<T>::shared_parameters() {
  ParamList<T> out;
  encoder.collect(out);
  edge_decoder.collect(out);
  restorer.collect(out);
  return out;
}

template <class T>
ParamList<T> Model<T>::node_parameters(Kind k) {
  ParamList<T> out;
  bank.node(k).collect(out);
  return out;
}

template <class T>
ParamList<T> Model<T>::routed_parameters(const Routing& routing) {
  ParamList<T> out = shared_parameters();
  for (std::size_t i : bank.route(routing)) bank.node_at(i).collect(out);
  return out;
}

template <class T>
ParamList<T> Model<T>::parameters() {
  ParamList<T> out = shared_parameters();
  bank.collect(out);
  return out;
}

template <class T>
void Model<T>::initialize(std::uint64_t seed) {
  nn::init_parameters(parameters(), seed);
}

#define USRNET_INSTANTIATE(T)        \
  template class Encoder<T>;         \
  template class NilmNode<T>;        \
  template class NodeBank<T>;        \
  template class EdgeDecoder<T>;     \
  template class SceneRestorer<T>;   \
  template class Model<T>;

USRNET_INSTANTIATE(float)
USRNET_INSTANTIATE(double)
#undef USRNET_INSTANTIATE

}  // namespace usrnet::model
