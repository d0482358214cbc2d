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
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "d3d/data.hpp"
#include "d3d/metrics.hpp"
#include "d3d/network.hpp"

namespace d3d {

struct RunConfig {
  NetworkConfig net;
  std::size_t epochs = 35;
  double lr = 4e-4;
  std::size_t halve_every = 6;
  double offset_lr_scale = 1.0;  ///< learning-rate multiplier for offset generators
  std::size_t steps_per_epoch = 100;
  std::size_t batch = 8;
  std::size_t patch = 32;  ///< LR patch side
  std::uint64_t seed = 0;
  std::filesystem::path data;  ///< dataset root holding manifest.json
  std::filesystem::path out = "run";
  std::optional<std::filesystem::path> checkpoint;  ///< resume / evaluate from

  // Synthetic dataset shape.
  std::size_t sequences = 60;
  std::size_t test_sequences = 10;
  std::size_t frames_per_sequence = 11;
  std::size_t height = 96;
  std::size_t width = 96;

  /// Keys absent from the JSON keep their current value.
  void merge_json(const std::string& text);
  std::string to_json() const;
};

/// Writes <root>/manifest.json and <root>/seq_XXXX/frame_XXXX.png. The first
/// cfg.test_sequences entries are tagged "test", the rest "train".
DatasetManifest synth_dataset(const RunConfig& cfg, const std::filesystem::path& root);

/// HR luminance frames and their bicubic LR counterparts.
struct LoadedSequence {
  std::string name;
  std::vector<Tensor<float>> hr;
  std::vector<Tensor<float>> lr;
};

std::vector<LoadedSequence> load_split(const std::filesystem::path& root, const std::string& split,
                                       std::size_t scale);

/// Mini-batch for a global step. Depends only on (seed, step) and the data,
/// never on the order in which batches are produced.
struct Batch {
  Tensor<float> lr;  ///< [B, 1, T, p, p]
  Tensor<float> hr;  ///< [B, 1, p*r, p*r]
};

Batch make_batch(const std::vector<LoadedSequence>& train, const RunConfig& cfg, std::size_t step);

struct TrainResult {
  Checkpoint state;
  std::vector<double> losses;  ///< one per step run in this call
};

/// Runs epochs [state.epoch, cfg.epochs) of cfg.steps_per_epoch Adam steps.
/// Each line of `log` is "epoch step loss lr". `on_epoch` is called after
/// every finished epoch (e.g. to write a checkpoint).
TrainResult train(const RunConfig& cfg, const std::vector<LoadedSequence>& train_set,
                  Checkpoint state, std::ostream* log,
                  const std::function<void(const Checkpoint&)>& on_epoch = {});

/// Fresh training state for cfg (He init from cfg.seed, empty Adam moments).
Checkpoint initial_state(const RunConfig& cfg);

/// Sliding window of config.frames LR frames around each index, edges
/// replicated; returns one SR frame per input frame.
std::vector<Tensor<float>> super_resolve(const Model<float>& model,
                                         const std::vector<Tensor<float>>& lr_frames);

std::vector<Tensor<float>> bicubic_upscale(const std::vector<Tensor<float>>& lr_frames,
                                           std::size_t scale);

EvalReport evaluate_model(const Model<float>& model, const std::vector<LoadedSequence>& test_set);
EvalReport evaluate_bicubic(const std::vector<LoadedSequence>& test_set, std::size_t scale);

/// Color inference: SR on luminance, bicubic on chroma (BT.601 YCbCr).
std::vector<Tensor<float>> super_resolve_color(const Model<float>& model,
                                               const std::vector<Tensor<float>>& frames);

}  // namespace d3d
