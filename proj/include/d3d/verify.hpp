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
#include <string>
#include <vector>

namespace d3d {

struct GradCheckRow {
  std::string op;
  std::string wrt;
  std::size_t instances = 0;
  double max_error = 0;
};

/// Central-difference checks in f64 of conv3d, conv2d, deformable conv and
/// the full d3d layer. Offsets keep fractional parts in [0.2, 0.8] so no
/// sample crosses a bilinear kink.
std::vector<GradCheckRow> gradcheck_suite(std::size_t instances = 5, std::uint64_t seed = 0);

/// Random offset field: integer part in [-max_int, max_int], fraction in [0.2, 0.8].
std::vector<double> fractional_offsets(std::size_t n, std::uint64_t seed, int max_int = 1);

}  // namespace d3d
