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

#include "d3d/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace d3d {

namespace {

constexpr char kArchiveMagic[4] = {'D', '3', 'D', 'A'};
constexpr std::uint32_t kArchiveVersion = 1;
constexpr std::uint32_t kMaxRank = 16;

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("unexpected end of tensor stream");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

template <typename T>
constexpr ScalarCode code_of() {
  return sizeof(T) == 4 ? ScalarCode::kF32 : ScalarCode::kF64;
}

template <typename Stored, typename T>
void read_payload(std::istream& is, Tensor<T>& t) {
  if constexpr (std::endian::native == std::endian::little && std::is_same_v<Stored, T>) {
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(T)))) {
      throw FormatError("truncated tensor payload");
    }
  } else {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(get_le<Stored>(is));
  }
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  if (t.empty()) throw FormatError("cannot serialize an unset tensor");
  os.write(kTensorMagic, 4);
  put_le<std::uint32_t>(os, kTensorVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(code_of<T>()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(T)));
  } else {
    for (T v : t.span()) put_le<T>(os, v);
  }
  if (!os) throw FormatError("failed writing tensor");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("unexpected end of tensor stream");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version));
  }
  const auto code = get_le<std::uint32_t>(is);
  if (code > 1) throw FormatError("unknown scalar code " + std::to_string(code));
  const auto rank = get_le<std::uint32_t>(is);
  if (rank == 0 || rank > kMaxRank) throw FormatError("bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_le<std::uint32_t>(is);
  Tensor<T> t;
  try {
    t = Tensor<T>(shape);
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
  if (static_cast<ScalarCode>(code) == ScalarCode::kF32) {
    read_payload<float>(is, t);
  } else {
    read_payload<double>(is, t);
  }
  return t;
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor<T>(is);
}

template <typename T>
void TensorArchive<T>::save(const std::filesystem::path& path) const {
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    os.write(kArchiveMagic, 4);
    put_le<std::uint32_t>(os, kArchiveVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(manifest.size()));
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_tensor(os, t);
    }
    if (!os) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
TensorArchive<T> TensorArchive<T>::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kArchiveMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a tensor archive (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kArchiveVersion) {
    throw FormatError(path.string() + ": unsupported archive version " + std::to_string(version));
  }
  TensorArchive a;
  const auto manifest_len = get_le<std::uint32_t>(is);
  a.manifest.resize(manifest_len);
  if (!is.read(a.manifest.data(), manifest_len)) throw FormatError("truncated archive manifest");
  const auto count = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated archive entry name");
    a.tensors.emplace(std::move(name), read_tensor<T>(is));
  }
  return a;
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);
template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);
template struct TensorArchive<float>;
template struct TensorArchive<double>;

}  // namespace d3d
