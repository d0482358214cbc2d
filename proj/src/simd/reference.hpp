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

namespace d3d::simd {

/// Dot product in the canonical order shared by every ISA: eight interleaved
/// partial sums over the largest multiple of 8, reduced as
/// ((s0+s4)+(s2+s6)) + ((s1+s5)+(s3+s7)), then the tail added sequentially.
template <typename T>
inline T dot_reference(std::size_t k, const T* a, const T* b) {
  T s[8] = {};
  const std::size_t kb = k / 8 * 8;
  for (std::size_t p = 0; p < kb; p += 8) {
    for (int l = 0; l < 8; ++l) s[l] += a[p + l] * b[p + l];
  }
  const T t0 = s[0] + s[4], t1 = s[1] + s[5], t2 = s[2] + s[6], t3 = s[3] + s[7];
  T r = (t0 + t2) + (t1 + t3);
  for (std::size_t p = kb; p < k; ++p) r += a[p] * b[p];
  return r;
}

}  // namespace d3d::simd
