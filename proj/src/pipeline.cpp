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

#include "d3d/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace d3d {

using json = nlohmann::json;

void RunConfig::merge_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.contains("net")) net = NetworkConfig::from_json(j["net"].dump());
  epochs = j.value("epochs", epochs);
  lr = j.value("lr", lr);
  halve_every = j.value("halve_every", halve_every);
  offset_lr_scale = j.value("offset_lr_scale", offset_lr_scale);
  steps_per_epoch = j.value("steps_per_epoch", steps_per_epoch);
  batch = j.value("batch", batch);
  patch = j.value("patch", patch);
  seed = j.value("seed", seed);
  if (j.contains("data")) data = j["data"].get<std::string>();
  if (j.contains("out")) out = j["out"].get<std::string>();
  if (j.contains("checkpoint")) checkpoint = j["checkpoint"].get<std::string>();
  sequences = j.value("sequences", sequences);
  test_sequences = j.value("test_sequences", test_sequences);
  frames_per_sequence = j.value("frames_per_sequence", frames_per_sequence);
  height = j.value("height", height);
  width = j.value("width", width);
}

std::string RunConfig::to_json() const {
  json j{{"net", json::parse(net.to_json())},
         {"epochs", epochs},
         {"lr", lr},
         {"halve_every", halve_every},
         {"offset_lr_scale", offset_lr_scale},
         {"steps_per_epoch", steps_per_epoch},
         {"batch", batch},
         {"patch", patch},
         {"seed", seed},
         {"data", data.string()},
         {"out", out.string()},
         {"sequences", sequences},
         {"test_sequences", test_sequences},
         {"frames_per_sequence", frames_per_sequence},
         {"height", height},
         {"width", width}};
  if (checkpoint) j["checkpoint"] = checkpoint->string();
  return j.dump(2);
}

namespace {

std::string seq_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%04zu", i);
  return buf;
}

}  // namespace

DatasetManifest synth_dataset(const RunConfig& cfg, const std::filesystem::path& root) {
  if (cfg.test_sequences >= cfg.sequences) throw std::invalid_argument("need at least one training sequence");
  std::filesystem::create_directories(root);
  DatasetManifest m;
  m.seed = cfg.seed;
  for (std::size_t i = 0; i < cfg.sequences; ++i) {
    const auto dir = root / seq_name(i);
    std::filesystem::create_directories(dir);
    const auto frames = synth_sequence(cfg.seed * 1000003 + i, cfg.frames_per_sequence, cfg.height, cfg.width);
    for (std::size_t t = 0; t < frames.size(); ++t) save_frame(frames[t], frame_path(dir, t));
    m.sequences.push_back({seq_name(i), frames.size(), i < cfg.test_sequences ? "test" : "train"});
  }
  m.save(root / "manifest.json");
  return m;
}

std::vector<LoadedSequence> load_split(const std::filesystem::path& root, const std::string& split,
                                       std::size_t scale) {
  const auto m = DatasetManifest::load(root / "manifest.json");
  std::vector<LoadedSequence> out;
  for (const auto& e : m.sequences) {
    if (e.split != split) continue;
    LoadedSequence s;
    s.name = e.dir;
    s.hr = to_luminance(load_sequence(root / e.dir));
    if (s.hr.size() != e.frames) {
      throw std::runtime_error(e.dir + ": manifest lists " + std::to_string(e.frames) + " frames, found " +
                               std::to_string(s.hr.size()));
    }
    for (const auto& f : s.hr) s.lr.push_back(bicubic_resample(f, 1.0 / static_cast<double>(scale)));
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::runtime_error("dataset " + root.string() + " has no '" + split + "' sequences");
  return out;
}

Batch make_batch(const std::vector<LoadedSequence>& train, const RunConfig& cfg, std::size_t step) {
  const std::size_t T = cfg.net.frames, r = cfg.net.scale, p = cfg.patch;
  Batch b{Tensor<float>({cfg.batch, 1, T, p, p}), Tensor<float>({cfg.batch, 1, p * r, p * r})};
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(step),
                      static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(seq);
    const auto& s = train[std::uniform_int_distribution<std::size_t>(0, train.size() - 1)(rng)];
    if (s.lr.size() < T) throw std::runtime_error(s.name + ": fewer frames than the network window");
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, s.lr.size() - T)(rng);
    const std::vector<Tensor<float>> hr(s.hr.begin() + start, s.hr.begin() + start + T);
    const std::vector<Tensor<float>> lr(s.lr.begin() + start, s.lr.begin() + start + T);
    const std::size_t h = lr[0].extent(1), w = lr[0].extent(2);
    if (p > h || p > w) throw std::runtime_error("patch larger than the LR frames");
    const std::size_t oy = std::uniform_int_distribution<std::size_t>(0, h - p)(rng);
    const std::size_t ox = std::uniform_int_distribution<std::size_t>(0, w - p)(rng);
    const auto sample = augment(crop_sample(hr, lr, r, p, oy, ox), rng);
    std::copy_n(sample.lr.data(), sample.lr.numel(), b.lr.data() + i * sample.lr.numel());
    std::copy_n(sample.hr.data(), sample.hr.numel(), b.hr.data() + i * sample.hr.numel());
  }
  return b;
}

Checkpoint initial_state(const RunConfig& cfg) {
  Checkpoint c;
  c.model = build<float>(cfg.net, cfg.seed);
  c.adam.base_lr = cfg.lr;
  c.adam.halve_every = cfg.halve_every;
  return c;
}

TrainResult train(const RunConfig& cfg, const std::vector<LoadedSequence>& train_set, Checkpoint state,
                  std::ostream* log, const std::function<void(const Checkpoint&)>& on_epoch) {
  if (!(state.model.config == cfg.net)) throw std::invalid_argument("checkpoint config differs from run config");
  state.adam.lr_scale.clear();
  if (cfg.offset_lr_scale != 1.0) {
    for (const auto& [name, t] : state.model.params)
      if (name.find(".offset.") != std::string::npos) state.adam.lr_scale[name] = cfg.offset_lr_scale;
  }
  TrainResult res;
  for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      const std::size_t step = epoch * cfg.steps_per_epoch + s;
      const Batch b = make_batch(train_set, cfg, step);
      ag::Graph<float> g;
      const auto p = bind(g, state.model);
      const auto y = forward(g, cfg.net, p, g.constant(b.lr));
      const auto loss = ag::mse_loss(g, y, g.constant(b.hr));
      const auto grads = g.backward(loss);
      ag::adam_step(state.model.params, grads, state.adam, epoch);
      const double l = g.value(loss)[0];
      res.losses.push_back(l);
      if (log) {
        char line[128];
        std::snprintf(line, sizeof line, "%zu %zu %.9g %.9g\n", epoch, step, l, state.adam.lr_at(epoch));
        *log << line << std::flush;
      }
    }
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
  res.state = std::move(state);
  return res;
}

std::vector<Tensor<float>> super_resolve(const Model<float>& model,
                                         const std::vector<Tensor<float>>& lr_frames) {
  const std::size_t N = lr_frames.size(), T = model.config.frames;
  if (N == 0) throw std::invalid_argument("super_resolve: no frames");
  const std::size_t h = lr_frames[0].extent(1), w = lr_frames[0].extent(2);
  constexpr std::size_t kBatch = 4;
  std::vector<Tensor<float>> out;
  for (std::size_t i0 = 0; i0 < N; i0 += kBatch) {
    const std::size_t nb = std::min(kBatch, N - i0);
    Tensor<float> x({nb, 1, T, h, w});
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t k = 0; k < T; ++k) {
        const long idx = static_cast<long>(i0 + b) + static_cast<long>(k) - static_cast<long>(T / 2);
        const auto& f = lr_frames[static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(N) - 1))];
        if (f.shape() != Shape{1, h, w}) throw ShapeError("super_resolve: frames must share one [1,h,w] shape");
        std::copy_n(f.data(), h * w, x.data() + (b * T + k) * h * w);
      }
    }
    const auto y = infer(model, x);
    const std::size_t plane = y.extent(2) * y.extent(3);
    for (std::size_t b = 0; b < nb; ++b) {
      Tensor<float> f({1, y.extent(2), y.extent(3)});
      std::copy_n(y.data() + b * plane, plane, f.data());
      out.push_back(std::move(f));
    }
  }
  return out;
}

std::vector<Tensor<float>> bicubic_upscale(const std::vector<Tensor<float>>& lr_frames, std::size_t scale) {
  std::vector<Tensor<float>> out;
  for (const auto& f : lr_frames) out.push_back(bicubic_resample(f, static_cast<double>(scale)));
  return out;
}

namespace {

std::vector<Tensor<float>> clamp01(std::vector<Tensor<float>> frames) {
  for (auto& f : frames)
    for (auto& v : f.span()) v = std::clamp(v, 0.0f, 1.0f);
  return frames;
}

}  // namespace

EvalReport evaluate_model(const Model<float>& model, const std::vector<LoadedSequence>& test_set) {
  EvalReport r;
  r.method = "d3dnet-" + block_name(model.config.block) + "-" + std::to_string(model.config.frames) + "f";
  for (const auto& s : test_set) r.add(evaluate_sequence(s.name, clamp01(super_resolve(model, s.lr)), s.hr));
  return r;
}

EvalReport evaluate_bicubic(const std::vector<LoadedSequence>& test_set, std::size_t scale) {
  EvalReport r;
  r.method = "bicubic";
  for (const auto& s : test_set) r.add(evaluate_sequence(s.name, clamp01(bicubic_upscale(s.lr, scale)), s.hr));
  return r;
}

namespace {

// BT.601 studio-swing YCbCr for values in [0, 1].
Tensor<float> rgb_to_ycbcr(const Tensor<float>& rgb) {
  const std::size_t n = rgb.extent(1) * rgb.extent(2);
  Tensor<float> out(rgb.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rgb[i], g = rgb[n + i], b = rgb[2 * n + i];
    out[i] = static_cast<float>((16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0);
    out[n + i] = static_cast<float>((128.0 - 37.797 * r - 74.203 * g + 112.0 * b) / 255.0);
    out[2 * n + i] = static_cast<float>((128.0 + 112.0 * r - 93.786 * g - 18.214 * b) / 255.0);
  }
  return out;
}

Tensor<float> ycbcr_to_rgb(const Tensor<float>& ycc) {
  const std::size_t n = ycc.extent(1) * ycc.extent(2);
  Tensor<float> out(ycc.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double y = ycc[i] - 16.0 / 255.0, cb = ycc[n + i] - 128.0 / 255.0, cr = ycc[2 * n + i] - 128.0 / 255.0;
    out[i] = static_cast<float>(std::clamp(1.164383 * y + 1.596027 * cr, 0.0, 1.0));
    out[n + i] = static_cast<float>(std::clamp(1.164383 * y - 0.391762 * cb - 0.812968 * cr, 0.0, 1.0));
    out[2 * n + i] = static_cast<float>(std::clamp(1.164383 * y + 2.017232 * cb, 0.0, 1.0));
  }
  return out;
}

}  // namespace

std::vector<Tensor<float>> super_resolve_color(const Model<float>& model,
                                               const std::vector<Tensor<float>>& frames) {
  if (frames.empty()) throw std::invalid_argument("no input frames");
  if (frames[0].extent(0) == 1) return clamp01(super_resolve(model, frames));
  std::vector<Tensor<float>> ycc, luma;
  for (const auto& f : frames) {
    ycc.push_back(rgb_to_ycbcr(f));
    luma.push_back(slice_channels(ycc.back(), 0, 1));
  }
  const auto sr = clamp01(super_resolve(model, luma));
  std::vector<Tensor<float>> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto up = bicubic_resample(ycc[i], static_cast<double>(model.config.scale));
    std::vector<Tensor<float>> parts{sr[i], slice_channels(up, 1, 3)};
    out.push_back(ycbcr_to_rgb(concat_channels<float>(parts)));
  }
  return out;
}

}  // namespace d3d
