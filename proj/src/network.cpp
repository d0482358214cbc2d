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

#include "d3d/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "d3d/data.hpp"
#include "d3d/deform_conv.hpp"
#include "d3d/tensor_io.hpp"

namespace d3d {

using json = nlohmann::json;

std::string block_name(BlockKind k) { return k == BlockKind::kD3D ? "d3d" : "c3d"; }

BlockKind parse_block(const std::string& s) {
  if (s == "d3d") return BlockKind::kD3D;
  if (s == "c3d") return BlockKind::kC3D;
  throw std::invalid_argument("unknown block kind '" + s + "' (expected d3d or c3d)");
}

void NetworkConfig::validate() const {
  if (frames == 0 || frames % 2 == 0) throw std::invalid_argument("frames must be odd");
  if (scale != 2 && scale != 4) throw std::invalid_argument("scale must be 2 or 4");
  if (channels == 0) throw std::invalid_argument("channels must be positive");
  if (res_blocks == 0 || recon_blocks == 0) throw std::invalid_argument("block counts must be >= 1");
}

std::string NetworkConfig::to_json() const {
  json j{{"frames", frames},         {"channels", channels}, {"res_blocks", res_blocks},
         {"recon_blocks", recon_blocks}, {"scale", scale},   {"block", block_name(block)},
         {"bicubic_skip", bicubic_skip}};
  return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  NetworkConfig c;
  c.frames = j.value("frames", c.frames);
  c.channels = j.value("channels", c.channels);
  c.res_blocks = j.value("res_blocks", c.res_blocks);
  c.recon_blocks = j.value("recon_blocks", c.recon_blocks);
  c.scale = j.value("scale", c.scale);
  c.block = parse_block(j.value("block", block_name(c.block)));
  c.bicubic_skip = j.value("bicubic_skip", c.bicubic_skip);
  c.validate();
  return c;
}

namespace {

std::size_t upsample_stages(std::size_t scale) { return scale == 4 ? 2 : 1; }

void add_conv(std::map<std::string, Shape>& out, const std::string& name, Shape weight) {
  const std::size_t co = weight[0];
  out[name + ".weight"] = std::move(weight);
  out[name + ".bias"] = {co};
}

}  // namespace

std::map<std::string, Shape> parameter_shapes(const NetworkConfig& config) {
  config.validate();
  const std::size_t c = config.channels;
  std::map<std::string, Shape> s;
  add_conv(s, "input", {c, 1, 3, 3, 3});
  for (std::size_t i = 0; i < config.res_blocks; ++i) {
    for (int j = 1; j <= 2; ++j) {
      const std::string name = "res" + std::to_string(i) + ".conv" + std::to_string(j);
      add_conv(s, name, {c, c, 3, 3, 3});
      if (config.block == BlockKind::kD3D) add_conv(s, name + ".offset", {kOffsetChannels, c, 3, 3, 3});
    }
  }
  add_conv(s, "fuse", {c, c * config.frames, 1, 1});
  for (std::size_t i = 0; i < config.recon_blocks; ++i) {
    for (int j = 1; j <= 2; ++j) {
      add_conv(s, "recon" + std::to_string(i) + ".conv" + std::to_string(j), {c, c, 3, 3});
    }
  }
  for (std::size_t u = 0; u < upsample_stages(config.scale); ++u) {
    add_conv(s, "up" + std::to_string(u), {4 * c, c, 3, 3});
  }
  add_conv(s, "output", {1, c, 3, 3});
  return s;
}

template <typename T>
Model<T> build(const NetworkConfig& config, std::uint64_t seed) {
  Model<T> m{config, {}};
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : parameter_shapes(config)) {
    auto t = zeros<T>(shape);
    const bool weight = name.ends_with(".weight");
    const bool offset = name.find(".offset.") != std::string::npos;
    const bool skip_out = config.bicubic_skip && name == "output.weight";
    if (weight && !offset && !skip_out) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& v : t.span()) v = static_cast<T>(nd(rng));
    }
    m.params.emplace(name, std::move(t));
  }
  return m;
}

template <typename T>
VarMap bind(ag::Graph<T>& g, const Model<T>& model) {
  VarMap out;
  for (const auto& [name, t] : model.params) out[name] = g.parameter(name, t);
  return out;
}

template <typename T>
VarMap bind_constants(ag::Graph<T>& g, const Model<T>& model) {
  VarMap out;
  for (const auto& [name, t] : model.params) out[name] = g.constant(t);
  return out;
}

namespace {

template <typename T>
ag::Var layer_3d(ag::Graph<T>& g, const VarMap& p, const std::string& name, ag::Var x,
                 BlockKind kind) {
  if (kind == BlockKind::kD3D) {
    return ag::d3d(g, x, p.at(name + ".weight"), p.at(name + ".bias"), p.at(name + ".offset.weight"),
                   p.at(name + ".offset.bias"));
  }
  return ag::conv3d(g, x, p.at(name + ".weight"), p.at(name + ".bias"));
}

template <typename T>
ag::Var conv2(ag::Graph<T>& g, const VarMap& p, const std::string& name, ag::Var x) {
  return ag::conv2d(g, x, p.at(name + ".weight"), p.at(name + ".bias"));
}

}  // namespace

template <typename T>
ag::Var residual_block_3d(ag::Graph<T>& g, const VarMap& p, const std::string& prefix, ag::Var x,
                          BlockKind kind) {
  auto h = ag::relu(g, layer_3d(g, p, prefix + ".conv1", x, kind));
  return ag::add(g, x, layer_3d(g, p, prefix + ".conv2", h, kind));
}

template <typename T>
ag::Var residual_block_2d(ag::Graph<T>& g, const VarMap& p, const std::string& prefix, ag::Var x) {
  auto h = ag::relu(g, conv2(g, p, prefix + ".conv1", x));
  return ag::add(g, x, conv2(g, p, prefix + ".conv2", h));
}

template <typename T>
ag::Var forward(ag::Graph<T>& g, const NetworkConfig& config, const VarMap& p, ag::Var lr) {
  const Shape in = g.value(lr).shape();
  const bool batched = in.size() == 5;
  if (!(in.size() == 4 || batched) || in[in.size() - 4] != 1 || in[in.size() - 3] != config.frames) {
    throw ShapeError("network expects [1," + std::to_string(config.frames) + ",h,w] frames, got " +
                     shape_str(in));
  }
  ag::Var x = batched ? lr : ag::reshape(g, lr, {1, in[0], in[1], in[2], in[3]});
  x = ag::add(g, x, g.constant(full<T>(g.value(x).shape(), T(-kInputMean))));

  x = ag::conv3d(g, x, p.at("input.weight"), p.at("input.bias"));
  for (std::size_t i = 0; i < config.res_blocks; ++i) {
    x = residual_block_3d(g, p, "res" + std::to_string(i), x, config.block);
  }
  x = conv2(g, p, "fuse", ag::temporal_fold(g, x));
  for (std::size_t i = 0; i < config.recon_blocks; ++i) {
    x = residual_block_2d(g, p, "recon" + std::to_string(i), x);
  }
  const std::size_t stages = upsample_stages(config.scale);
  for (std::size_t u = 0; u < stages; ++u) {
    x = ag::pixel_shuffle(g, conv2(g, p, "up" + std::to_string(u), x), 2);
    if (u + 1 < stages) x = ag::relu(g, x);
  }
  x = conv2(g, p, "output", x);
  if (config.bicubic_skip) {
    const Tensor<T>& v = g.value(lr);
    const std::size_t B = batched ? in[0] : 1, h = in[in.size() - 2], w = in[in.size() - 1];
    Tensor<T> centre({B, 1, h, w});
    const std::size_t mid = config.frames / 2;
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(v.data() + (b * config.frames + mid) * h * w, h * w, centre.data() + b * h * w);
    }
    x = ag::add(g, x, g.constant(bicubic_resample(centre, static_cast<double>(config.scale))));
  }
  if (batched) return x;
  const Shape& s = g.value(x).shape();
  return ag::reshape(g, x, {s[1], s[2], s[3]});
}

template <typename T>
Tensor<T> infer(const Model<T>& model, const Tensor<T>& lr) {
  ag::Graph<T> g;
  const auto p = bind_constants(g, model);
  return g.value(forward(g, model.config, p, g.constant(lr)));
}

std::size_t count_params(const NetworkConfig& config) {
  std::size_t n = 0;
  for (const auto& [name, shape] : parameter_shapes(config)) n += shape_numel(shape);
  return n;
}

std::size_t offset_branch_params(std::size_t channels) {
  return 2 * (kGridTaps * channels * kOffsetChannels + kOffsetChannels);
}

std::uint64_t count_flops(const NetworkConfig& config, std::size_t out_h, std::size_t out_w) {
  config.validate();
  if (out_h % config.scale != 0 || out_w % config.scale != 0) {
    throw std::invalid_argument("output size must be a multiple of the scale");
  }
  const std::uint64_t c = config.channels, t = config.frames;
  const std::uint64_t lr_plane = (out_h / config.scale) * (out_w / config.scale);
  const std::uint64_t vol = t * lr_plane;
  std::uint64_t macs = kGridTaps * 1 * c * vol;  // input C3D
  const std::uint64_t layers = 2 * config.res_blocks;
  macs += layers * kGridTaps * c * c * vol;
  if (config.block == BlockKind::kD3D) {
    macs += layers * kGridTaps * c * kOffsetChannels * vol;  // offset generator
    macs += layers * 4 * kGridTaps * c * vol;                // bilinear sampling
  }
  macs += t * c * c * lr_plane;                           // bottleneck
  macs += 2 * config.recon_blocks * 9 * c * c * lr_plane;  // reconstruction
  std::uint64_t plane = lr_plane;
  for (std::size_t u = 0; u < upsample_stages(config.scale); ++u) {
    macs += 9 * c * 4 * c * plane;
    plane *= 4;
  }
  macs += 9 * c * 1 * plane;  // output conv at HR
  return 2 * macs;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  TensorArchive<float> a;
  json j{{"config", json::parse(model.config.to_json())},
         {"epoch", epoch},
         {"adam",
          {{"step", adam.step},
           {"base_lr", adam.base_lr},
           {"beta1", adam.beta1},
           {"beta2", adam.beta2},
           {"eps", adam.eps},
           {"halve_every", adam.halve_every}}}};
  a.manifest = j.dump();
  for (const auto& [name, t] : model.params) {
    a.tensors[name] = t;
    if (auto it = adam.m.find(name); it != adam.m.end()) a.tensors[name + ".m"] = it->second;
    if (auto it = adam.v.find(name); it != adam.v.end()) a.tensors[name + ".v"] = it->second;
  }
  a.save(path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  auto a = TensorArchive<float>::load(path);
  Checkpoint ck;
  try {
    const json j = json::parse(a.manifest);
    ck.model.config = NetworkConfig::from_json(j.at("config").dump());
    ck.epoch = j.at("epoch").get<std::size_t>();
    const json& s = j.at("adam");
    ck.adam.step = s.at("step").get<std::size_t>();
    ck.adam.base_lr = s.at("base_lr").get<double>();
    ck.adam.beta1 = s.at("beta1").get<double>();
    ck.adam.beta2 = s.at("beta2").get<double>();
    ck.adam.eps = s.at("eps").get<double>();
    ck.adam.halve_every = s.at("halve_every").get<std::size_t>();
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint manifest: " + e.what());
  }
  for (const auto& [name, shape] : parameter_shapes(ck.model.config)) {
    auto it = a.tensors.find(name);
    if (it == a.tensors.end() || it->second.shape() != shape) {
      throw FormatError(path.string() + ": missing or mis-shaped parameter '" + name + "'");
    }
    ck.model.params[name] = std::move(it->second);
    for (const char* suffix : {".m", ".v"}) {
      auto jt = a.tensors.find(name + suffix);
      if (jt == a.tensors.end()) continue;
      if (jt->second.shape() != shape) throw FormatError(path.string() + ": bad moment for " + name);
      (suffix[1] == 'm' ? ck.adam.m : ck.adam.v)[name] = std::move(jt->second);
    }
  }
  return ck;
}

#define D3D_INSTANTIATE(T)                                                                     \
  template Model<T> build<T>(const NetworkConfig&, std::uint64_t);                            \
  template VarMap bind<T>(ag::Graph<T>&, const Model<T>&);                                    \
  template VarMap bind_constants<T>(ag::Graph<T>&, const Model<T>&);                          \
  template ag::Var residual_block_3d<T>(ag::Graph<T>&, const VarMap&, const std::string&,     \
                                        ag::Var, BlockKind);                                  \
  template ag::Var residual_block_2d<T>(ag::Graph<T>&, const VarMap&, const std::string&,     \
                                        ag::Var);                                             \
  template ag::Var forward<T>(ag::Graph<T>&, const NetworkConfig&, const VarMap&, ag::Var);   \
  template Tensor<T> infer<T>(const Model<T>&, const Tensor<T>&);

D3D_INSTANTIATE(float)
D3D_INSTANTIATE(double)

}  // namespace d3d
