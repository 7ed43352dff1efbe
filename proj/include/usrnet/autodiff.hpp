// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over C x H x W tensors.
//
// A Graph records every node that requires a gradient, in creation order.
// Graph::backward() seeds the output with 1 and walks the record backwards,
// letting each node accumulate into the gradients of its inputs. Parameters
// are leaves whose gradient lives in the Parameter itself, so several graphs
// (one per sample of a batch) accumulate into the same buffers.
//
// With gradients disabled nothing is recorded and intermediates are released
// as soon as the last Var referring to them goes away.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "usrnet/tensor.hpp"

namespace usrnet::ad {

template <class T>
struct Parameter {
  std::string name;
  /// Logical extents used for serialization, e.g. {out, in, k, k}.
  std::vector<std::int64_t> dims;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::int64_t> d, Shape storage)
      : name(std::move(n)), dims(std::move(d)), value(storage), grad(storage) {}

  void zero_grad() { grad.fill(T(0)); }
  [[nodiscard]] std::size_t size() const { return value.size(); }
};

template <class T>
class Graph;

template <class T>
struct Node {
  Graph<T>* graph = nullptr;
  Tensor<T> value;
  Tensor<T> grad;
  Parameter<T>* param = nullptr;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  [[nodiscard]] const Tensor<T>& val() const { return param != nullptr ? param->value : value; }

  /// Gradient buffer, allocated (zeroed) on first use.
  Tensor<T>& grad_buffer() {
    if (param != nullptr) return param->grad;
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  [[nodiscard]] bool has_grad() const { return param != nullptr || !grad.empty(); }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Tensor<T>& value() const { return node_->val(); }
  [[nodiscard]] const Shape& shape() const { return node_->val().shape(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  [[nodiscard]] Graph<T>& graph() const { return *node_->graph; }
  [[nodiscard]] Node<T>* node() const { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  /// Gradient accumulated by the last backward pass, or nullptr.
  [[nodiscard]] const Tensor<T>* grad() const { return node_->has_grad() ? &node_->grad_buffer() : nullptr; }
  /// Scalar value of a 1x1x1 variable.
  [[nodiscard]] T item() const { return node_->val()[0]; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Node<T>&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->graph = this;
    n->value = std::move(value);
    return Var<T>(std::move(n));
  }

  /// Leaf wrapping `p`; tracks gradients only if the graph does.
  Var<T> parameter(Parameter<T>& p) {
    auto n = std::make_shared<Node<T>>();
    n->graph = this;
    n->param = &p;
    n->requires_grad = grad_enabled_;
    return Var<T>(std::move(n));
  }

  /// Creates an op node. `backward` is kept only if some input requires a gradient.
  Var<T> record(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
    auto n = std::make_shared<Node<T>>();
    n->graph = this;
    n->value = std::move(value);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    if (grad_enabled_ && needs) {
      n->requires_grad = true;
      n->inputs.reserve(inputs.size());
      for (const auto& in : inputs) n->inputs.push_back(in.ptr());
      n->backward = std::move(backward);
      tape_.push_back(n);
    }
    return Var<T>(std::move(n));
  }

  /// Back-propagates from a 1x1x1 output.
  void backward(const Var<T>& output) {
    if (output.shape().size() != 1) throw std::invalid_argument("backward: output must be a scalar");
    if (!output.requires_grad()) return;
    output.node()->grad_buffer()[0] += T(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward && !n.grad.empty()) n.backward(n);
    }
  }

  [[nodiscard]] std::size_t recorded() const { return tape_.size(); }

 private:
  bool grad_enabled_;
  std::vector<std::shared_ptr<Node<T>>> tape_;
};

}  // namespace usrnet::ad
