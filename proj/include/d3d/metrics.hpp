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

#include <string>
#include <vector>

#include "d3d/tensor.hpp"

namespace d3d {

/// Returned when the frames are identical.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for images in [0, 1], capped at kPsnrCap.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

/// Mean SSIM over all fully-inside 11x11 Gaussian (sigma 1.5) windows,
/// K1 = 0.01, K2 = 0.03, dynamic range 1. Both extents must be >= 11.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

/// Normalized 11x11 Gaussian window, row-major.
std::vector<double> ssim_window();

struct FrameScore {
  std::size_t index = 0;
  double psnr = 0;
  double ssim = 0;
};

struct SequenceReport {
  std::string name;
  std::vector<FrameScore> frames;  ///< scored frames only
  double mean_psnr = 0;
  double mean_ssim = 0;
};

/// Frames skipped at each end of a sequence.
inline constexpr std::size_t kEdgeExclusion = 2;

/// Scores every frame except the first and last kEdgeExclusion on the
/// luminance channel. RGB frames ([3,H,W]) are converted; [1,H,W] frames
/// are taken as luminance.
SequenceReport evaluate_sequence(const std::string& name, const std::vector<Tensor<float>>& sr,
                                 const std::vector<Tensor<float>>& hr);

struct EvalReport {
  std::string method;
  std::vector<SequenceReport> sequences;
  double mean_psnr = 0;  ///< mean of sequence means
  double mean_ssim = 0;

  void add(SequenceReport s);
  std::string to_json() const;
};

}  // namespace d3d
