// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "usrnet/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "usrnet/io/archive.hpp"

namespace usrnet::losses {

void LossWeights::validate() const {
  if (!(gamma1 >= 0) || !(gamma2 >= 0) || !(lambda_edge >= 0)) throw std::invalid_argument("loss weights must be nonnegative");
  if (!(epsilon > 0)) throw std::invalid_argument("loss epsilon must be positive");
}

Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw std::invalid_argument("unknown reduction '" + s + "' (expected mean or sum)");
}

std::string reduction_name(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

template <class T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed, std::array<int, 5> channels)
    : weights_(kLayerWeights.begin(), kLayerWeights.end()) {
  int in = 3;
  for (std::size_t s = 0; s < channels.size(); ++s) {
    stages_.emplace_back("phi.stage" + std::to_string(s), in, channels[s], 3);
    in = channels[s];
  }
  for (auto& st : stages_) {
    nn::init_parameter(st.weight, seed);
    nn::init_parameter(st.bias, seed);
  }
}

template <class T>
void FeatureExtractor<T>::load(const std::filesystem::path& path) {
  const io::Archive a = io::read_archive(path);
  for (auto& st : stages_) {
    for (ad::Parameter<T>* p : {&st.weight, &st.bias}) {
      const io::ArchiveEntry* e = a.find(p->name);
      if (e == nullptr) throw std::runtime_error(path.string() + ": missing entry " + p->name);
      if (e->dims != p->dims) throw std::runtime_error(path.string() + ": entry " + p->name + " has the wrong shape");
      for (std::size_t i = 0; i < e->data.size(); ++i) p->value[i] = static_cast<T>(e->data[i]);
    }
  }
}

template <class T>
std::vector<Var<T>> FeatureExtractor<T>::features(Graph<T>& g, const Var<T>& image) const {
  if (image.shape().c != 3) throw std::invalid_argument("feature extractor expects a 3-channel image");
  std::vector<Var<T>> taps;
  Var<T> x = image;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) x = ops::max_pool2(x);
    x = ops::relu(ops::conv2d(x, g.constant(stages_[s].weight.value), g.constant(stages_[s].bias.value)));
    taps.push_back(x);
  }
  return taps;
}

template <class T>
Var<T> mae_loss(const Var<T>& restored, const Var<T>& target) {
  require_same_shape(restored.shape(), target.shape(), "mae_loss");
  return ops::mean_abs_diff(restored, target);
}

template <class T>
Var<T> edge_loss(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "edge_loss");
  return ops::mean_abs_diff(ops::laplacian(a), ops::laplacian(b));
}

template <class T>
Var<T> edge_target(const Var<T>& target) {
  return ops::laplacian(ops::luminance(target));
}

template <class T>
Var<T> contrastive_loss(const Var<T>& restored, const Var<T>& target, const Var<T>& degraded, const FeatureExtractor<T>& phi,
                        double epsilon, Reduction reduction) {
  require_same_shape(restored.shape(), target.shape(), "contrastive_loss");
  require_same_shape(degraded.shape(), target.shape(), "contrastive_loss");
  if (!(epsilon > 0)) throw std::invalid_argument("contrastive_loss: epsilon must be positive");
  const auto& w = phi.layer_weights();
  if (w.size() != phi.taps()) {
    throw std::invalid_argument("contrastive_loss: " + std::to_string(w.size()) + " layer weights for " +
                                std::to_string(phi.taps()) + " taps");
  }
  Graph<T>& g = restored.graph();
  const auto ft = phi.features(g, target);
  const auto fr = phi.features(g, restored);
  const auto fd = phi.features(g, degraded);
  auto distance = [reduction](const Var<T>& a, const Var<T>& b) {
    Var<T> d = ops::mean_abs_diff(a, b);
    return reduction == Reduction::mean ? d : ops::scale(d, static_cast<T>(a.shape().size()));
  };
  Var<T> total;
  for (std::size_t i = 0; i < ft.size(); ++i) {
    Var<T> ratio = ops::div(distance(ft[i], fr[i]), ops::add_scalar(distance(ft[i], fd[i]), static_cast<T>(epsilon)));
    Var<T> term = ops::scale(ratio, static_cast<T>(w[i]));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

template <class T>
LossTerms<T> total_loss(const Var<T>& restored, const Var<T>& edge_pred, const Var<T>& target, const Var<T>& degraded,
                        const FeatureExtractor<T>& phi, const LossWeights& weights, Reduction reduction) {
  weights.validate();
  if (edge_pred.shape().c != 1 || edge_pred.shape().h != target.shape().h || edge_pred.shape().w != target.shape().w) {
    throw std::invalid_argument("total_loss: edge prediction " + to_string(edge_pred.shape()) +
                                " does not match a single-channel map of " + to_string(target.shape()));
  }
  Var<T> mae = mae_loss(restored, target);
  Var<T> con = contrastive_loss(restored, target, degraded, phi, weights.epsilon, reduction);
  Var<T> edge = ops::mean_abs_diff(edge_pred, edge_target(target));
  LossTerms<T> out;
  out.mae = static_cast<double>(mae.item());
  out.contrastive = static_cast<double>(con.item());
  out.edge = static_cast<double>(edge.item());
  out.total = ops::add(ops::add(ops::scale(mae, static_cast<T>(weights.gamma1)), ops::scale(con, static_cast<T>(weights.gamma2))),
                       ops::scale(edge, static_cast<T>(weights.lambda_edge)));
  return out;
}

#define USRNET_INSTANTIATE(T)                                                                                        \
  template class FeatureExtractor<T>;                                                                                \
  template Var<T> mae_loss<T>(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> edge_loss<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> edge_target<T>(const Var<T>&);                                                                     \
  template Var<T> contrastive_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const FeatureExtractor<T>&, double, \
                                      Reduction);                                                                    \
  template LossTerms<T> total_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,                   \
                                      const FeatureExtractor<T>&, const LossWeights&, Reduction);

USRNET_INSTANTIATE(float)
USRNET_INSTANTIATE(double)
#undef USRNET_INSTANTIATE

}  // namespace usrnet::losses
