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

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "d3d/tensor.hpp"

namespace d3d::ag {

template <typename T>
using ParameterMap = std::map<std::string, Tensor<T>>;

/// Handle to a node in a Graph. A default-constructed Var means "absent"
/// (e.g. a convolution without bias).
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// reverse insertion order is a topological order for backward.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& gout)>;

  Var constant(Tensor<T> value);
  /// Leaf whose gradient is reported by backward() under `name`.
  Var parameter(const std::string& name, Tensor<T> value);
  Var record(Tensor<T> value, const std::vector<Var>& inputs, Backward backward);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return v.valid() && nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a scalar `loss` for every parameter leaf. Parameters that
  /// do not reach the loss get zeros. The graph is left intact, so repeated
  /// calls return identical results.
  ParameterMap<T> backward(Var loss);

  /// Used by backward rules: adds g into the gradient slot of v.
  void accumulate(Var v, Tensor<T> g);

 private:
  struct Node {
    Tensor<T> value;
    Backward backward;
    bool requires_grad = false;
    std::string name;  ///< non-empty for parameters
  };
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::map<std::string, std::size_t> params_;
};

// Differentiable operations. Shapes follow the tensor-core and conv modules.
template <typename T>
Var add(Graph<T>& g, Var a, Var b);
template <typename T>
Var sub(Graph<T>& g, Var a, Var b);
template <typename T>
Var mul(Graph<T>& g, Var a, Var b);
template <typename T>
Var scalar_mul(Graph<T>& g, Var a, T s);
template <typename T>
Var relu(Graph<T>& g, Var a);
/// Scalar [1] result.
template <typename T>
Var sum(Graph<T>& g, Var a);
/// mean((a - b)^2), scalar [1] result.
template <typename T>
Var mse_loss(Graph<T>& g, Var a, Var b);
template <typename T>
Var reshape(Graph<T>& g, Var a, const Shape& shape);
template <typename T>
Var slice(Graph<T>& g, Var a, std::size_t begin, std::size_t end, std::size_t axis);
template <typename T>
Var temporal_fold(Graph<T>& g, Var a);
template <typename T>
Var pixel_shuffle(Graph<T>& g, Var a, std::size_t r);
template <typename T>
Var conv3d(Graph<T>& g, Var x, Var weight, Var bias = {});
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias = {});
template <typename T>
Var deform_conv3d(Graph<T>& g, Var x, Var offsets, Var weight, Var bias = {});
/// Offsets from a generator convolution on x, then deformable convolution.
template <typename T>
Var d3d(Graph<T>& g, Var x, Var weight, Var bias, Var gen_weight, Var gen_bias);

/// Adam with bias correction and a step schedule that halves the learning
/// rate every `halve_every` epochs.
template <typename T>
struct AdamState {
  double base_lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t halve_every = 6;  ///< 0 disables the schedule
  std::size_t step = 0;
  ParameterMap<T> m;
  ParameterMap<T> v;
  /// Per-parameter learning-rate multipliers; absent names use 1.
  std::map<std::string, double> lr_scale;

  double lr_at(std::size_t epoch) const;
};

/// One update of every parameter in `params` from the matching entry in
/// `grads`. Throws std::runtime_error naming the parameter if a gradient is
/// missing, mis-shaped or non-finite; no parameter is touched in that case.
template <typename T>
void adam_step(ParameterMap<T>& params, const ParameterMap<T>& grads, AdamState<T>& state,
               std::size_t epoch);

/// Builds the scalar function from graph leaves standing for `inputs`.
using ScalarFn = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

/// Max over all input components of |analytic - fd| / max(|analytic|, |fd|, 1e-8)
/// with central differences of step eps.
double grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double eps = 1e-4);

}  // namespace d3d::ag
