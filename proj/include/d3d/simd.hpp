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
#include <string_view>

// Data-parallel inner loops behind a per-ISA function table. Every vector
// kernel reproduces the accumulation order of its scalar reference exactly
// (separate multiply and add, no contraction), so the two paths agree
// bitwise and the choice of ISA never changes a result.
namespace d3d::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);

/// Best supported ISA, overridable with D3D_SIMD=scalar|avx2.
Isa detect_isa();
Isa active_isa();
void set_active_isa(Isa isa);

template <typename T>
struct Kernels {
  /// C[m,n] += A[m,k] * B[k,n]; each C element accumulates over k in order.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc);
  /// C[m,n] += A[k,m]^T * B[k,n].
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc);
  /// C[m,n] += A[m,k] * B[n,k]^T. Dot products use eight interleaved partial
  /// sums reduced pairwise, then a sequential tail (see dot_reference).
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc);
  /// y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  /// out = a + b
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  /// out = max(x, 0)
  void (*relu)(std::size_t n, const T* x, T* out);
  /// dx += dy where x > 0
  void (*relu_backward)(std::size_t n, const T* x, const T* dy, T* dx);
  /// One Adam update; bc1/bc2 are the bias-correction denominators.
  void (*adam)(std::size_t n, T* param, const T* grad, T* m, T* v, T lr, T beta1, T beta2, T eps,
               T bc1, T bc2);
};

template <typename T>
const Kernels<T>& kernels(Isa isa);

template <typename T>
const Kernels<T>& active() {
  return kernels<T>(active_isa());
}

namespace scalar {
template <typename T>
const Kernels<T>& table();
}
namespace avx2 {
// Returns nullptr when the AVX2 path was not compiled in.
template <typename T>
const Kernels<T>* table();
}

}  // namespace d3d::simd
