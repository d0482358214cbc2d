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

// Shared im2col + GEMM driver for the plain and deformable convolutions. A
// convolution differs only in how the column matrix is gathered (and how its
// gradient is scattered back); everything else lives here.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "d3d/parallel.hpp"
#include "d3d/simd.hpp"
#include "d3d/tensor.hpp"

namespace d3d::detail {

struct ConvGeometry {
  std::size_t batch = 1, ci = 1, co = 1;
  std::size_t t = 1, h = 1, w = 1;
  std::size_t kt = 1, kh = 1, kw = 1;
  bool batched = false;  // input carried a leading batch extent

  std::size_t taps() const { return kt * kh * kw; }
  std::size_t positions() const { return t * h * w; }
  std::size_t col_rows() const { return ci * taps(); }
};

/// x: [C,T,H,W] / [N,C,T,H,W]; w: [Co,Ci,kT,kH,kW].
ConvGeometry conv3d_geometry(const Shape& x, const Shape& w, const char* op);

/// Positions per column chunk; bounds the scratch buffer to a few MB.
inline std::size_t chunk_positions(const ConvGeometry& g) {
  constexpr std::size_t kScratchElems = std::size_t{1} << 21;
  const std::size_t per = std::max<std::size_t>(1, kScratchElems / g.col_rows());
  return std::clamp<std::size_t>(per, 64, g.positions());
}

/// Plain im2col for one sample over positions [p0, p1): col[r, p - p0] with
/// row r = ci * taps + tap, zero for taps outside the volume.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, std::size_t p0, std::size_t p1, T* col);

/// Adjoint of im2col: dx += scatter(dcol).
template <typename T>
void col2im(const ConvGeometry& g, const T* dcol, std::size_t p0, std::size_t p1, T* dx);

template <typename T>
void gemm_nn_rows(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  const auto& kern = simd::active<T>();
  parallel_for(
      m,
      [&](std::size_t i0, std::size_t i1) {
        kern.gemm_nn(i1 - i0, n, k, a + i0 * lda, lda, b, ldb, c + i0 * ldc, ldc);
      },
      8);
}

template <typename T>
void gemm_tn_rows(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  const auto& kern = simd::active<T>();
  parallel_for(
      m,
      [&](std::size_t i0, std::size_t i1) {
        kern.gemm_tn(i1 - i0, n, k, a + i0, lda, b, ldb, c + i0 * ldc, ldc);
      },
      8);
}

template <typename T>
void gemm_nt_rows(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  const auto& kern = simd::active<T>();
  parallel_for(
      m,
      [&](std::size_t i0, std::size_t i1) {
        kern.gemm_nt(i1 - i0, n, k, a + i0 * lda, lda, b, ldb, c + i0 * ldc, ldc);
      },
      4);
}

/// y[n] = bias + W * col(n). build(n, p0, p1, scratch) fills scratch with the
/// [col_rows, p1 - p0] column block.
template <typename T, typename BuildCol>
void conv_forward_engine(const ConvGeometry& g, const T* weight, const T* bias, BuildCol&& build,
                         T* y) {
  const std::size_t P = g.positions();
  const std::size_t K = g.col_rows();
  const std::size_t chunk = chunk_positions(g);
  std::vector<T> col(K * chunk);
  for (std::size_t n = 0; n < g.batch; ++n) {
    T* yn = y + n * g.co * P;
    for (std::size_t co = 0; co < g.co; ++co) {
      std::fill_n(yn + co * P, P, bias ? bias[co] : T(0));
    }
    for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
      const std::size_t p1 = std::min(P, p0 + chunk);
      build(n, p0, p1, col.data());
      gemm_nn_rows(g.co, p1 - p0, K, weight, K, col.data(), p1 - p0, yn + p0, P);
    }
  }
}

/// Accumulates dW (and dbias) and hands each chunk's column gradient to
/// scatter(n, p0, p1, dcol). Either side may be skipped.
template <typename T, typename BuildCol, typename Scatter>
void conv_backward_engine(const ConvGeometry& g, const T* weight, const T* dy, BuildCol&& build,
                          Scatter&& scatter, T* dw, T* dbias, bool need_col_grad) {
  const std::size_t P = g.positions();
  const std::size_t K = g.col_rows();
  const std::size_t chunk = chunk_positions(g);
  if (dbias) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t co = 0; co < g.co; ++co) {
        const T* row = dy + (n * g.co + co) * P;
        T acc = T(0);
        for (std::size_t p = 0; p < P; ++p) acc += row[p];
        dbias[co] += acc;
      }
    }
  }
  std::vector<T> col(dw ? K * chunk : 0);
  std::vector<T> dcol(need_col_grad ? K * chunk : 0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* dyn = dy + n * g.co * P;
    for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
      const std::size_t p1 = std::min(P, p0 + chunk);
      const std::size_t pc = p1 - p0;
      if (dw) {
        build(n, p0, p1, col.data());
        gemm_nt_rows(g.co, K, pc, dyn + p0, P, col.data(), pc, dw, K);
      }
      if (need_col_grad) {
        std::fill_n(dcol.data(), K * pc, T(0));
        gemm_tn_rows(K, pc, g.co, weight, K, dyn + p0, P, dcol.data(), pc);
        scatter(n, p0, p1, dcol.data());
      }
    }
  }
}

}  // namespace d3d::detail
