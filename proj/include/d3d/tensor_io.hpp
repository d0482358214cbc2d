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
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "d3d/tensor.hpp"

namespace d3d {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raw tensor record, little-endian:
//   "D3DT" | u32 version=1 | u32 scalar code (0=f32, 1=f64) | u32 rank |
//   rank x u32 extents (outermost first) | row-major payload
inline constexpr char kTensorMagic[4] = {'D', '3', 'D', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;

enum class ScalarCode : std::uint32_t { kF32 = 0, kF64 = 1 };

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads one record, converting the payload to T if it was stored with the
/// other scalar width.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

/// Named-tensor container used for checkpoints:
///   "D3DA" | u32 version=1 | u32 manifest bytes | manifest (UTF-8 text) |
///   u32 count | count x (u32 name bytes | name | raw tensor record)
/// Tensors are written in name order.
template <typename T>
struct TensorArchive {
  std::string manifest;
  std::map<std::string, Tensor<T>> tensors;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
};

}  // namespace d3d
