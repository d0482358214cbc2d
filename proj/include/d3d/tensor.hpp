// Copyright 2026 The d3dvsr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace d3d {

/// Extents, outermost first. Feature maps are [C, T, H, W] (or [N, C, T, H, W]
/// when batched); 2-D maps are [C, H, W] / [N, C, H, W]. Height always
/// precedes width.
using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Number of elements; throws ShapeError for rank 0 or a zero extent.
std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor. A default-constructed tensor is the "unset" state
/// (empty() is true) and is only used as a placeholder, e.g. for gradients
/// that have not been allocated yet.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_)) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Bounds-checked multi-index access.
  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index rank " + std::to_string(index.size()) + " != tensor rank " +
                       std::to_string(shape_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
Tensor<T> zeros(const Shape& shape) {
  return Tensor<T>(shape);
}

template <typename T>
Tensor<T> full(const Shape& shape, T value) {
  Tensor<T> t(shape);
  t.fill(value);
  return t;
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

void require_same_shape(const Shape& a, const Shape& b, const char* what);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// a += b, shapes must match.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

/// Concatenate along `axis`; every other extent must agree.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> ts, std::size_t axis = 0);

/// Elements [begin, end) along `axis`.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, std::size_t begin, std::size_t end,
                         std::size_t axis = 0);

/// [.., C*r*r, H, W] -> [.., C, H*r, W*r] on the last three axes (rank 3 or 4):
/// out(c, h*r + dy, w*r + dx) = in(c*r*r + dy*r + dx, h, w).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& a, std::size_t r);

/// Adjoint of pixel_shuffle (also its inverse).
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& a, std::size_t r);

/// [N, C, T, H, W] -> [N, T*C, H, W]: time slices stacked along channels,
/// slice t occupying channels [t*C, (t+1)*C).
template <typename T>
Tensor<T> temporal_fold(const Tensor<T>& a);
template <typename T>
Tensor<T> temporal_unfold(const Tensor<T>& a, std::size_t frames);

template <typename T>
double sum(const Tensor<T>& a);

}  // namespace d3d
