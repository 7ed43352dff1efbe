// Copyright (c) 2026, The usrnet-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace usrnet {

/// Channel-first extent of a feature map or image.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

/// Dense C x H x W array, row-major within each channel plane.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {
    if (shape.c < 0 || shape.h < 0 || shape.w < 0) throw std::invalid_argument("negative tensor extent");
  }
  Tensor(int c, int h, int w, T fill = T(0)) : Tensor(Shape{c, h, w}, fill) {}

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int channels() const { return shape_.c; }
  [[nodiscard]] int height() const { return shape_.h; }
  [[nodiscard]] int width() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
  const T* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }

  T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Elementwise conversion to another scalar type.
  template <class U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  [[nodiscard]] std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.h + static_cast<std::size_t>(y)) * shape_.w + static_cast<std::size_t>(x);
  }

  Shape shape_{};
  std::vector<T> data_;
};

/// Throws std::invalid_argument naming `what` when the two shapes differ.
inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.span().begin(), t.span().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace usrnet
