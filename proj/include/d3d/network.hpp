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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "d3d/autograd.hpp"
#include "d3d/tensor.hpp"

namespace d3d {

enum class BlockKind { kD3D, kC3D };

std::string block_name(BlockKind k);
BlockKind parse_block(const std::string& s);

struct NetworkConfig {
  std::size_t frames = 7;
  std::size_t channels = 64;
  std::size_t res_blocks = 5;    ///< residual 3-D blocks in feature extraction
  std::size_t recon_blocks = 6;  ///< residual 2-D blocks after fusion
  std::size_t scale = 4;         ///< 2 or 4
  BlockKind block = BlockKind::kD3D;
  bool bicubic_skip = false;     ///< add bicubic upscale of the centre frame to the output

  /// Throws std::invalid_argument on odd settings (even frame count etc.).
  void validate() const;
  std::string to_json() const;
  static NetworkConfig from_json(const std::string& text);
  bool operator==(const NetworkConfig&) const = default;
};

/// Parameters by name. Names are fixed by the config:
///   input.{weight,bias}
///   res<i>.conv<j>.{weight,bias}, res<i>.conv<j>.offset.{weight,bias} (D3D only)
///   fuse.{weight,bias}, recon<i>.conv<j>.{weight,bias}, up<s>.{weight,bias},
///   output.{weight,bias}
template <typename T>
struct Model {
  NetworkConfig config;
  ag::ParameterMap<T> params;
};

/// Shapes of every parameter, in name order.
std::map<std::string, Shape> parameter_shapes(const NetworkConfig& config);

/// He-normal conv weights, zero biases, zero offset generators. With
/// bicubic_skip the output conv starts at zero, so the untrained model is bicubic.
template <typename T>
Model<T> build(const NetworkConfig& config, std::uint64_t seed);

using VarMap = std::map<std::string, ag::Var>;

/// Registers every model parameter as a graph leaf.
template <typename T>
VarMap bind(ag::Graph<T>& g, const Model<T>& model);

/// Registers every model parameter as a constant (inference only).
template <typename T>
VarMap bind_constants(ag::Graph<T>& g, const Model<T>& model);

/// y = x + L2(relu(L1(x))) with L = D3D or C3D layers named <prefix>.conv{1,2}.
template <typename T>
ag::Var residual_block_3d(ag::Graph<T>& g, const VarMap& p, const std::string& prefix, ag::Var x,
                          BlockKind kind);

/// y = x + conv2(relu(conv1(x))), 3x3 2-D convolutions.
template <typename T>
ag::Var residual_block_2d(ag::Graph<T>& g, const VarMap& p, const std::string& prefix, ag::Var x);

/// Subtracted from every input pixel before the first convolution.
inline constexpr double kInputMean = 0.5;

/// lr: [1, T, h, w] or [B, 1, T, h, w] -> [1, h*r, w*r] or [B, 1, h*r, w*r].
/// With bicubic_skip no gradient flows back into lr through the skip.
template <typename T>
ag::Var forward(ag::Graph<T>& g, const NetworkConfig& config, const VarMap& p, ag::Var lr);

template <typename T>
Tensor<T> infer(const Model<T>& model, const Tensor<T>& lr);

std::size_t count_params(const NetworkConfig& config);
/// Parameters of the offset generators of one residual block.
std::size_t offset_branch_params(std::size_t channels);
/// 2 * multiply-accumulates for one output frame of out_h x out_w; each
/// bilinear sample costs 4 MACs per tap and input channel.
std::uint64_t count_flops(const NetworkConfig& config, std::size_t out_h, std::size_t out_w);

/// Serialized training state: parameters, Adam moments ("<name>.m",
/// "<name>.v") and a JSON manifest with the config and counters.
struct Checkpoint {
  Model<float> model;
  ag::AdamState<float> adam;
  std::size_t epoch = 0;

  void save(const std::filesystem::path& path) const;
  /// Throws FormatError on a malformed or inconsistent file.
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace d3d
