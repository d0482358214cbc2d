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
#include <random>
#include <string>
#include <vector>

#include "d3d/tensor.hpp"

namespace d3d {

/// Separable cubic resampling of the last two axes ([..., H, W]) with the
/// Keys kernel (a = -0.5). Downscaling widens the kernel by 1/scale for
/// anti-aliasing; taps are normalized to sum to one and edge coordinates are
/// clamped. scale must be one of 1/4, 1/2, 1, 2, 4.
template <typename T>
Tensor<T> bicubic_resample(const Tensor<T>& img, double scale);

/// Keys cubic kernel with a = -0.5.
double keys_cubic(double x);

/// A low-resolution window and the high-resolution centre frame it targets.
struct VideoSample {
  Tensor<float> lr;  ///< [1, T, h, w] in [0, 1]
  Tensor<float> hr;  ///< [1, h*r, w*r] in [0, 1]
  std::string id;
};

struct SynthOptions {
  std::size_t min_patterns = 1;
  std::size_t max_patterns = 3;
  double max_speed = 3.0;  ///< px per frame, each axis bounded by this norm
};

/// Procedural HR video: a static band-limited background plus 1-3 textured
/// rigid shapes moving at constant sub-pixel velocities. Frames are [1, H, W]
/// in [0, 1]; the same seed gives the same frames bit for bit.
std::vector<Tensor<float>> synth_sequence(std::uint64_t seed, std::size_t frames, std::size_t height,
                                          std::size_t width, const SynthOptions& opt = {});

/// One rigid shape, exposed so tests can render closed-form translations.
struct SynthPattern {
  double cy = 0, cx = 0;        ///< centre at frame 0
  double vy = 0, vx = 0;        ///< px per frame
  double radius = 8;            ///< half-size (square) or radius (disc)
  bool square = false;
  double base = 0.5, amp = 0.2;  ///< stripe texture level and amplitude
  double wavelength = 6, angle = 0;
};

/// Frame t of a plain background of level `background` plus `patterns`.
Tensor<float> render_frame(double background, const std::vector<SynthPattern>& patterns,
                           std::size_t t, std::size_t height, std::size_t width);

/// Downsamples the T HR frames by r, then crops an aligned patch: LR
/// patch x patch at a random offset, HR crop at r times that offset.
/// The HR target is the centre frame.
VideoSample make_sample(const std::vector<Tensor<float>>& hr_frames, std::size_t r,
                        std::size_t patch, std::mt19937_64& rng);

/// Same as make_sample with precomputed LR frames and a fixed LR offset.
VideoSample crop_sample(const std::vector<Tensor<float>>& hr_frames,
                        const std::vector<Tensor<float>>& lr_frames, std::size_t r,
                        std::size_t patch, std::size_t oy, std::size_t ox);

/// Dihedral transform of the last two axes: optional horizontal flip
/// followed by k quarter turns counter-clockwise.
template <typename T>
Tensor<T> dihedral(const Tensor<T>& a, bool flip_h, int quarter_turns);
template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& a);
template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& a);
template <typename T>
Tensor<T> rotate90(const Tensor<T>& a, int quarter_turns);

/// Applies one random dihedral transform to every LR frame and the HR frame.
VideoSample augment(const VideoSample& s, std::mt19937_64& rng);

/// [3, H, W] RGB in [0, 1] -> [1, H, W] BT.601 luma (studio swing).
Tensor<float> rgb_to_luminance(const Tensor<float>& rgb);

/// 8-bit PNG frames. Values are scaled by 255, rounded and clamped;
/// [1, H, W] writes grayscale, [3, H, W] RGB.
void save_frame(const Tensor<float>& frame, const std::filesystem::path& path);
/// Returns [1, H, W] or [3, H, W] in [0, 1].
Tensor<float> load_frame(const std::filesystem::path& path);
std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index);
/// Reads frame_0000.png, frame_0001.png, ... until the first gap.
std::vector<Tensor<float>> load_sequence(const std::filesystem::path& dir);
/// Luminance of each frame; grayscale frames are taken as luminance already.
std::vector<Tensor<float>> to_luminance(const std::vector<Tensor<float>>& frames);

struct ManifestEntry {
  std::string dir;  ///< relative to the manifest
  std::size_t frames = 0;
  std::string split;  ///< "train" or "test"
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> sequences;

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

}  // namespace d3d
