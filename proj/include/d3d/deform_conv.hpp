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

#include "d3d/conv.hpp"
#include "d3d/tensor.hpp"

namespace d3d {

/// Taps in the 3x3x3 sampling grid.
inline constexpr std::size_t kGridTaps = 27;
/// Offset field channels for the 3x3x3 grid: (dh, dw) per tap.
inline constexpr std::size_t kOffsetChannels = 2 * kGridTaps;

/// Offset field layout: [2N, T, H, W] (or [B, 2N, T, H, W]), indexed by output
/// location. Channel 2n holds the height displacement of tap n and channel
/// 2n+1 its width displacement, in fractional pixels; taps follow the
/// lexicographic (dt, dh, dw) grid order. There is no temporal channel: only
/// the spatial tap positions deform.
inline constexpr std::size_t offset_channel_h(std::size_t tap) { return 2 * tap; }
inline constexpr std::size_t offset_channel_w(std::size_t tap) { return 2 * tap + 1; }

/// Deformable 3-D convolution layer: the main kernel plus the 3x3x3 offset
/// generator that reads the same input and emits the 2N-channel field.
template <typename T>
struct D3DLayer {
  ConvWeights<T> main;
  ConvWeights<T> offset_gen;
};

template <typename T>
struct DeformGrads {
  Tensor<T> dx;        ///< through the sampling path only
  Tensor<T> dw;
  Tensor<T> dbias;     ///< unset when the main kernel has no bias
  Tensor<T> doffsets;  ///< same shape as the offset field
};

/// Bilinear read of time slice t of channel c at fractional (h, w) in a
/// [C, T, H, W] tensor. Neighbours outside the frame contribute zero.
template <typename T>
T bilinear_sample(const Tensor<T>& x, std::size_t c, std::size_t t, T h, T w);

/// conv3d with the generator; requires 2 * taps(main) output channels.
template <typename T>
Tensor<T> generate_offsets(const Tensor<T>& x, const ConvWeights<T>& gen,
                           std::size_t taps = kGridTaps);

/// y(p0) = bias + sum_n w(pn) * x(p0 + pn + dp_n(p0)), one deformable group:
/// the field is shared by all input channels. Temporal tap coordinates are
/// never displaced; a tap whose time index falls outside [0, T) reads zero.
template <typename T>
Tensor<T> deform_conv3d_forward(const Tensor<T>& x, const Tensor<T>& offsets,
                                const ConvWeights<T>& main);

template <typename T>
DeformGrads<T> deform_conv3d_backward(const Tensor<T>& x, const Tensor<T>& offsets,
                                      const ConvWeights<T>& main, const Tensor<T>& dy,
                                      bool need_input_grad = true);

/// Full layer: offsets from the generator, then the deformable convolution.
template <typename T>
Tensor<T> d3d_forward(const Tensor<T>& x, const D3DLayer<T>& layer);

/// Gradients of the deformable convolution for a given field. The generator's
/// own gradients follow by pushing doffsets through conv3d_backward.
template <typename T>
DeformGrads<T> d3d_backward(const Tensor<T>& x, const D3DLayer<T>& layer,
                            const Tensor<T>& offsets, const Tensor<T>& dy);

}  // namespace d3d
