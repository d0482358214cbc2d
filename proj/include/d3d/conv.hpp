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

#include "d3d/tensor.hpp"

namespace d3d {

/// Stride-1, dilation-1 convolution parameters. Kernel extents must be odd;
/// zero padding of (k-1)/2 per axis keeps the output extents equal to the
/// input's. Taps are ordered lexicographically by (dt, dh, dw).
template <typename T>
struct ConvWeights {
  Tensor<T> weight;  ///< [C_out, C_in, kT, kH, kW] (3-D) or [C_out, C_in, kH, kW] (2-D)
  Tensor<T> bias;    ///< [C_out]; unset means no bias

  std::size_t out_channels() const { return weight.extent(0); }
  std::size_t in_channels() const { return weight.extent(1); }
  bool has_bias() const { return !bias.empty(); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> dbias;  ///< unset when the layer has no bias
};

/// x: [C_in, T, H, W] or [N, C_in, T, H, W]; output has the same rank.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const ConvWeights<T>& p);

/// With need_input_grad = false the (often large) dx is skipped and left unset.
template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, const ConvWeights<T>& p, const Tensor<T>& dy,
                             bool need_input_grad = true);

/// x: [C_in, H, W] or [N, C_in, H, W].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvWeights<T>& p);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvWeights<T>& p, const Tensor<T>& dy,
                             bool need_input_grad = true);

}  // namespace d3d
