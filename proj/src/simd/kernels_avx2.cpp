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

// AVX2 kernels. Built with -mavx2 -ffp-contract=off; every loop keeps the
// per-element operation order of the scalar reference.

#include "d3d/simd.hpp"

#if defined(D3D_HAVE_AVX2)

#include <immintrin.h>
#include <type_traits>

#include <cmath>

#include "simd/reference.hpp"

namespace d3d::simd::avx2 {

namespace {

struct VecF {
  using T = float;
  using Reg = __m256;
  static constexpr std::size_t kLanes = 8;
  static Reg load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, Reg r) { _mm256_storeu_ps(p, r); }
  static Reg set1(T v) { return _mm256_set1_ps(v); }
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_ps(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_ps(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_ps(a); }
  static Reg max(Reg a, Reg b) { return _mm256_max_ps(a, b); }
  static Reg gt(Reg a, Reg b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static Reg blend(Reg a, Reg b, Reg mask) { return _mm256_blendv_ps(a, b, mask); }
};

struct VecD {
  using T = double;
  using Reg = __m256d;
  static constexpr std::size_t kLanes = 4;
  static Reg load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, Reg r) { _mm256_storeu_pd(p, r); }
  static Reg set1(T v) { return _mm256_set1_pd(v); }
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_pd(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_pd(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_pd(a); }
  static Reg max(Reg a, Reg b) { return _mm256_max_pd(a, b); }
  static Reg gt(Reg a, Reg b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static Reg blend(Reg a, Reg b, Reg mask) { return _mm256_blendv_pd(a, b, mask); }
};

// C[R rows, NV vectors] += sum_k A(r, k) * B[k, :]. A(r, k) lives at
// a[r * ars + k * aks], which covers both the NN and TN layouts.
template <typename V, int R, int NV>
inline void outer_block(std::size_t kk, const typename V::T* a, std::size_t ars, std::size_t aks,
                        const typename V::T* b, std::size_t ldb, typename V::T* c,
                        std::size_t ldc) {
  typename V::Reg acc[R][NV];
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < NV; ++v) acc[r][v] = V::load(c + r * ldc + v * V::kLanes);
  }
  for (std::size_t p = 0; p < kk; ++p) {
    typename V::Reg bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = V::load(b + p * ldb + v * V::kLanes);
    for (int r = 0; r < R; ++r) {
      const typename V::Reg av = V::set1(a[r * ars + p * aks]);
      for (int v = 0; v < NV; ++v) acc[r][v] = V::add(acc[r][v], V::mul(av, bv[v]));
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < NV; ++v) V::store(c + r * ldc + v * V::kLanes, acc[r][v]);
  }
}

template <typename V, int NV>
inline void outer_rows(std::size_t m, std::size_t kk, const typename V::T* a, std::size_t ars,
                       std::size_t aks, const typename V::T* b, std::size_t ldb,
                       typename V::T* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    outer_block<V, 4, NV>(kk, a + i * ars, ars, aks, b, ldb, c + i * ldc, ldc);
  }
  for (; i < m; ++i) outer_block<V, 1, NV>(kk, a + i * ars, ars, aks, b, ldb, c + i * ldc, ldc);
}

template <typename V>
void outer_product_gemm(std::size_t m, std::size_t n, std::size_t kk, const typename V::T* a,
                        std::size_t ars, std::size_t aks, const typename V::T* b,
                        std::size_t ldb, typename V::T* c, std::size_t ldc) {
  using T = typename V::T;
  constexpr std::size_t kWide = 2 * V::kLanes;
  std::size_t j = 0;
  for (; j + kWide <= n; j += kWide) outer_rows<V, 2>(m, kk, a, ars, aks, b + j, ldb, c + j, ldc);
  for (; j + V::kLanes <= n; j += V::kLanes) {
    outer_rows<V, 1>(m, kk, a, ars, aks, b + j, ldb, c + j, ldc);
  }
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      T acc = c[i * ldc + j];
      for (std::size_t p = 0; p < kk; ++p) acc += a[i * ars + p * aks] * b[p * ldb + j];
      c[i * ldc + j] = acc;
    }
  }
}

template <typename V>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const typename V::T* a, std::size_t lda,
             const typename V::T* b, std::size_t ldb, typename V::T* c, std::size_t ldc) {
  outer_product_gemm<V>(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

template <typename V>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const typename V::T* a, std::size_t lda,
             const typename V::T* b, std::size_t ldb, typename V::T* c, std::size_t ldc) {
  outer_product_gemm<V>(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

// Eight partial sums held in registers, reduced in the reference order.
inline float reduce8(__m256 acc) {
  const __m128 t = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  const __m128 u = _mm_add_ps(t, _mm_movehl_ps(t, t));
  return _mm_cvtss_f32(_mm_add_ss(u, _mm_shuffle_ps(u, u, 1)));
}

inline double reduce8(__m256d lo, __m256d hi) {
  const __m256d t = _mm256_add_pd(lo, hi);
  const __m128d u = _mm_add_pd(_mm256_castpd256_pd128(t), _mm256_extractf128_pd(t, 1));
  return _mm_cvtsd_f64(_mm_add_sd(u, _mm_unpackhi_pd(u, u)));
}

constexpr int kNtCols = 4;

// I rows of A against J rows of B; each output keeps its own 8-lane accumulator.
template <int I, int J>
inline void dot_tile(std::size_t k, const float* a, std::size_t lda, const float* b,
                     std::size_t ldb, float* out, std::size_t ldc) {
  const std::size_t kb = k / 8 * 8;
  __m256 acc[I][J];
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) acc[i][j] = _mm256_setzero_ps();
  for (std::size_t p = 0; p < kb; p += 8) {
    __m256 av[I];
    for (int i = 0; i < I; ++i) av[i] = _mm256_loadu_ps(a + i * lda + p);
    for (int j = 0; j < J; ++j) {
      const __m256 bv = _mm256_loadu_ps(b + j * ldb + p);
      for (int i = 0; i < I; ++i) acc[i][j] = _mm256_add_ps(acc[i][j], _mm256_mul_ps(av[i], bv));
    }
  }
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      float r = reduce8(acc[i][j]);
      for (std::size_t p = kb; p < k; ++p) r += a[i * lda + p] * b[j * ldb + p];
      out[i * ldc + j] += r;
    }
  }
}

template <int J>
inline void dot_block(std::size_t k, const float* a, const float* b, std::size_t ldb, float* out) {
  dot_tile<1, J>(k, a, 0, b, ldb, out, 0);
}

template <int J>
inline void dot_block(std::size_t k, const double* a, const double* b, std::size_t ldb,
                      double* out) {
  const std::size_t kb = k / 8 * 8;
  __m256d lo[J], hi[J];
  for (int j = 0; j < J; ++j) lo[j] = hi[j] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kb; p += 8) {
    const __m256d alo = _mm256_loadu_pd(a + p);
    const __m256d ahi = _mm256_loadu_pd(a + p + 4);
    for (int j = 0; j < J; ++j) {
      const double* bj = b + j * ldb + p;
      lo[j] = _mm256_add_pd(lo[j], _mm256_mul_pd(alo, _mm256_loadu_pd(bj)));
      hi[j] = _mm256_add_pd(hi[j], _mm256_mul_pd(ahi, _mm256_loadu_pd(bj + 4)));
    }
  }
  for (int j = 0; j < J; ++j) {
    double r = reduce8(lo[j], hi[j]);
    for (std::size_t p = kb; p < k; ++p) r += a[p] * b[j * ldb + p];
    out[j] += r;
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc) {
  std::size_t i0 = 0;
  if constexpr (std::is_same_v<T, float>) {
    for (; i0 + 2 <= m; i0 += 2) {
      std::size_t j = 0;
      for (; j + kNtCols <= n; j += kNtCols) {
        dot_tile<2, kNtCols>(k, a + i0 * lda, lda, b + j * ldb, ldb, c + i0 * ldc + j, ldc);
      }
      for (; j < n; ++j) dot_tile<2, 1>(k, a + i0 * lda, lda, b + j * ldb, ldb, c + i0 * ldc + j, ldc);
    }
  }
  for (std::size_t i = i0; i < m; ++i) {
    std::size_t j = 0;
    for (; j + kNtCols <= n; j += kNtCols) {
      dot_block<kNtCols>(k, a + i * lda, b + j * ldb, ldb, c + i * ldc + j);
    }
    for (; j < n; ++j) dot_block<1>(k, a + i * lda, b + j * ldb, ldb, c + i * ldc + j);
  }
}

template <typename V>
void axpy(std::size_t n, typename V::T alpha, const typename V::T* x, typename V::T* y) {
  const auto av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::kLanes <= n; i += V::kLanes) {
    V::store(y + i, V::add(V::load(y + i), V::mul(av, V::load(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename V>
void add(std::size_t n, const typename V::T* a, const typename V::T* b, typename V::T* out) {
  std::size_t i = 0;
  for (; i + V::kLanes <= n; i += V::kLanes) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename V>
void relu(std::size_t n, const typename V::T* x, typename V::T* out) {
  using T = typename V::T;
  const auto z = V::zero();
  std::size_t i = 0;
  // max returns the second operand for NaN and for +-0, matching x > 0 ? x : 0.
  for (; i + V::kLanes <= n; i += V::kLanes) V::store(out + i, V::max(V::load(x + i), z));
  for (; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename V>
void relu_backward(std::size_t n, const typename V::T* x, const typename V::T* dy,
                   typename V::T* dx) {
  using T = typename V::T;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + V::kLanes <= n; i += V::kLanes) {
    const auto d = V::load(dx + i);
    const auto mask = V::gt(V::load(x + i), z);
    V::store(dx + i, V::blend(d, V::add(d, V::load(dy + i)), mask));
  }
  for (; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

template <typename V>
void adam(std::size_t n, typename V::T* param, const typename V::T* grad, typename V::T* m,
          typename V::T* v, typename V::T lr, typename V::T beta1, typename V::T beta2,
          typename V::T eps, typename V::T bc1, typename V::T bc2) {
  using T = typename V::T;
  const T one_minus_b1 = T(1) - beta1;
  const T one_minus_b2 = T(1) - beta2;
  const auto vb1 = V::set1(beta1), vb2 = V::set1(beta2), vomb1 = V::set1(one_minus_b1),
             vomb2 = V::set1(one_minus_b2), vlr = V::set1(lr), veps = V::set1(eps),
             vbc1 = V::set1(bc1), vbc2 = V::set1(bc2);
  std::size_t i = 0;
  for (; i + V::kLanes <= n; i += V::kLanes) {
    const auto g = V::load(grad + i);
    const auto mi = V::add(V::mul(vb1, V::load(m + i)), V::mul(vomb1, g));
    const auto vi = V::add(V::mul(vb2, V::load(v + i)), V::mul(vomb2, V::mul(g, g)));
    V::store(m + i, mi);
    V::store(v + i, vi);
    const auto mhat = V::div(mi, vbc1);
    const auto vhat = V::div(vi, vbc2);
    const auto step = V::div(V::mul(vlr, mhat), V::add(V::sqrt(vhat), veps));
    V::store(param + i, V::sub(V::load(param + i), step));
  }
  for (; i < n; ++i) {
    const T g = grad[i];
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    param[i] = param[i] - (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

const Kernels<float> kTableF{gemm_nn<VecF>, gemm_tn<VecF>, gemm_nt<float>,       axpy<VecF>,
                             add<VecF>,     relu<VecF>,    relu_backward<VecF>, adam<VecF>};
const Kernels<double> kTableD{gemm_nn<VecD>, gemm_tn<VecD>, gemm_nt<double>,      axpy<VecD>,
                              add<VecD>,     relu<VecD>,    relu_backward<VecD>, adam<VecD>};

}  // namespace

template <>
const Kernels<float>* table<float>() {
  return &kTableF;
}
template <>
const Kernels<double>* table<double>() {
  return &kTableD;
}

}  // namespace d3d::simd::avx2

#else

namespace d3d::simd::avx2 {
template <>
const Kernels<float>* table<float>() {
  return nullptr;
}
template <>
const Kernels<double>* table<double>() {
  return nullptr;
}
}  // namespace d3d::simd::avx2

#endif
