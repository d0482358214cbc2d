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

#include "d3d/deform_conv.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "conv_engine.hpp"

namespace d3d {

namespace {

// Bilinear footprint of one (tap, position) pair, shared by every input
// channel. idx are offsets within a channel; a neighbour outside the frame
// gets index 0 and zero weight, so every read is branch-free. dh/dw hold the
// derivative of the blend with respect to the sample coordinates.
template <typename T>
struct SampleSite {
  std::uint32_t idx[4] = {0, 0, 0, 0};
  T w[4] = {};
  T dh[4] = {};
  T dw[4] = {};
};

// False (site left empty) when every neighbour of (h, w) lies outside.
template <typename T>
bool fill_site(SampleSite<T>& s, T h, T w, std::size_t H, std::size_t W, std::size_t slice) {
  s = SampleSite<T>{};
  const T Hf = static_cast<T>(H), Wf = static_cast<T>(W);
  if (h <= T(-1) || h >= Hf || w <= T(-1) || w >= Wf) return false;
  const T hf = std::floor(h), wf = std::floor(w);
  const long h0 = static_cast<long>(hf), w0 = static_cast<long>(wf);
  const T lh = h - hf, lw = w - wf;
  const T hh = T(1) - lh, hw = T(1) - lw;
  const T weight[4] = {hh * hw, hh * lw, lh * hw, lh * lw};
  const T dh[4] = {-hw, -lw, hw, lw};
  const T dw[4] = {-hh, hh, -lh, lh};
  for (int k = 0; k < 4; ++k) {
    const long ch = h0 + (k >> 1), cw = w0 + (k & 1);
    if (ch < 0 || cw < 0 || ch >= static_cast<long>(H) || cw >= static_cast<long>(W)) continue;
    s.idx[k] = static_cast<std::uint32_t>(slice + static_cast<std::size_t>(ch) * W +
                                          static_cast<std::size_t>(cw));
    s.w[k] = weight[k];
    s.dh[k] = dh[k];
    s.dw[k] = dw[k];
  }
  return true;
}

template <typename T>
inline T blend(const SampleSite<T>& s, const T* xc) {
  return s.w[0] * xc[s.idx[0]] + s.w[1] * xc[s.idx[1]] + s.w[2] * xc[s.idx[2]] +
         s.w[3] * xc[s.idx[3]];
}

template <typename T>
detail::ConvGeometry deform_geometry(const Tensor<T>& x, const Tensor<T>& offsets,
                                     const ConvWeights<T>& main, const char* op) {
  auto g = detail::conv3d_geometry(x.shape(), main.weight.shape(), op);
  Shape expect = g.batched ? Shape{g.batch, 2 * g.taps(), g.t, g.h, g.w}
                           : Shape{2 * g.taps(), g.t, g.h, g.w};
  if (offsets.shape() != expect) {
    throw ShapeError(std::string(op) + ": offset field " + shape_str(offsets.shape()) +
                     " does not match expected " + shape_str(expect));
  }
  if (main.has_bias() && (main.bias.rank() != 1 || main.bias.extent(0) != g.co)) {
    throw ShapeError(std::string(op) + ": bias does not match output channels");
  }
  return g;
}

// Sites for sample n over positions [p0, p1), laid out [tap][p - p0].
template <typename T>
void build_sites(const detail::ConvGeometry& g, const T* off, std::size_t p0, std::size_t p1,
                 std::vector<SampleSite<T>>& sites) {
  const std::size_t P = g.positions();
  const std::size_t pc = p1 - p0;
  const std::size_t plane = g.h * g.w;
  sites.resize(g.taps() * pc);
  const long pt = static_cast<long>(g.kt / 2), ph = static_cast<long>(g.kh / 2),
             pw = static_cast<long>(g.kw / 2);
  for (std::size_t kt = 0; kt < g.kt; ++kt) {
    for (std::size_t kh = 0; kh < g.kh; ++kh) {
      for (std::size_t kw = 0; kw < g.kw; ++kw) {
        const std::size_t tap = (kt * g.kh + kh) * g.kw + kw;
        const T* dh_row = off + offset_channel_h(tap) * P;
        const T* dw_row = off + offset_channel_w(tap) * P;
        SampleSite<T>* out = sites.data() + tap * pc;
        for (std::size_t p = p0; p < p1; ++p) {
          SampleSite<T>& s = out[p - p0];
          const long t = static_cast<long>(p / plane);
          const long h = static_cast<long>((p / g.w) % g.h);
          const long w = static_cast<long>(p % g.w);
          const long it = t + static_cast<long>(kt) - pt;
          if (it < 0 || it >= static_cast<long>(g.t)) {
            s = SampleSite<T>{};
            continue;
          }
          const T sh = static_cast<T>(h + static_cast<long>(kh) - ph) + dh_row[p];
          const T sw = static_cast<T>(w + static_cast<long>(kw) - pw) + dw_row[p];
          fill_site(s, sh, sw, g.h, g.w, static_cast<std::size_t>(it) * plane);
        }
      }
    }
  }
}

template <typename T>
void sites_to_col(const detail::ConvGeometry& g, const T* xn,
                  const std::vector<SampleSite<T>>& sites, std::size_t pc, T* col) {
  const std::size_t chan = g.t * g.h * g.w;
  const std::size_t taps = g.taps();
  parallel_for(g.ci, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const T* xc = xn + c * chan;
      for (std::size_t tap = 0; tap < taps; ++tap) {
        const SampleSite<T>* s = sites.data() + tap * pc;
        T* dst = col + (c * taps + tap) * pc;
        for (std::size_t q = 0; q < pc; ++q) {
          dst[q] = blend(s[q], xc);
        }
      }
    }
  });
}

}  // namespace

template <typename T>
T bilinear_sample(const Tensor<T>& x, std::size_t c, std::size_t t, T h, T w) {
  if (x.rank() != 4) throw ShapeError("bilinear_sample expects [C,T,H,W], got " + shape_str(x.shape()));
  if (c >= x.extent(0) || t >= x.extent(1)) throw std::out_of_range("bilinear_sample: c/t out of range");
  SampleSite<T> s;
  fill_site(s, h, w, x.extent(2), x.extent(3), t * x.extent(2) * x.extent(3));
  return blend(s, x.data() + c * x.extent(1) * x.extent(2) * x.extent(3));
}

template <typename T>
Tensor<T> generate_offsets(const Tensor<T>& x, const ConvWeights<T>& gen, std::size_t taps) {
  if (gen.weight.rank() != 5 || gen.out_channels() != 2 * taps) {
    throw ShapeError("generate_offsets: generator must emit " + std::to_string(2 * taps) +
                     " channels, has weight " + shape_str(gen.weight.shape()));
  }
  return conv3d_forward(x, gen);
}

template <typename T>
Tensor<T> deform_conv3d_forward(const Tensor<T>& x, const Tensor<T>& offsets,
                                const ConvWeights<T>& main) {
  const auto g = deform_geometry(x, offsets, main, "deform_conv3d_forward");
  Tensor<T> y(g.batched ? Shape{g.batch, g.co, g.t, g.h, g.w} : Shape{g.co, g.t, g.h, g.w});
  const std::size_t P = g.positions();
  std::vector<SampleSite<T>> sites;
  detail::conv_forward_engine<T>(
      g, main.weight.data(), main.has_bias() ? main.bias.data() : nullptr,
      [&](std::size_t n, std::size_t p0, std::size_t p1, T* col) {
        build_sites(g, offsets.data() + n * 2 * g.taps() * P, p0, p1, sites);
        sites_to_col(g, x.data() + n * g.ci * P, sites, p1 - p0, col);
      },
      y.data());
  return y;
}

template <typename T>
DeformGrads<T> deform_conv3d_backward(const Tensor<T>& x, const Tensor<T>& offsets,
                                      const ConvWeights<T>& main, const Tensor<T>& dy,
                                      bool need_input_grad) {
  const auto g = deform_geometry(x, offsets, main, "deform_conv3d_backward");
  require_same_shape(dy.shape(),
                     g.batched ? Shape{g.batch, g.co, g.t, g.h, g.w} : Shape{g.co, g.t, g.h, g.w},
                     "deform_conv3d_backward dy");
  DeformGrads<T> grads;
  if (need_input_grad) grads.dx = zeros_like(x);
  grads.dw = zeros_like(main.weight);
  if (main.has_bias()) grads.dbias = zeros_like(main.bias);
  grads.doffsets = zeros_like(offsets);

  const std::size_t P = g.positions();
  const std::size_t taps = g.taps();
  const std::size_t chan = P;
  std::vector<SampleSite<T>> sites;
  std::size_t sites_for = static_cast<std::size_t>(-1), sites_p0 = 0;

  auto ensure_sites = [&](std::size_t n, std::size_t p0, std::size_t p1) {
    if (sites_for != n || sites_p0 != p0) {
      build_sites(g, offsets.data() + n * 2 * taps * P, p0, p1, sites);
      sites_for = n;
      sites_p0 = p0;
    }
  };

  detail::conv_backward_engine<T>(
      g, main.weight.data(), dy.data(),
      [&](std::size_t n, std::size_t p0, std::size_t p1, T* col) {
        ensure_sites(n, p0, p1);
        sites_to_col(g, x.data() + n * g.ci * P, sites, p1 - p0, col);
      },
      [&](std::size_t n, std::size_t p0, std::size_t p1, const T* dcol) {
        ensure_sites(n, p0, p1);
        const std::size_t pc = p1 - p0;
        const T* xn = x.data() + n * g.ci * chan;
        // Offset gradients: d(sample)/dh and d(sample)/dw summed over channels
        // in ascending channel order.
        T* doff = grads.doffsets.data() + n * 2 * taps * P;
        parallel_for(taps, [&](std::size_t t0, std::size_t t1) {
          for (std::size_t tap = t0; tap < t1; ++tap) {
            const SampleSite<T>* s = sites.data() + tap * pc;
            T* dh_row = doff + offset_channel_h(tap) * P + p0;
            T* dw_row = doff + offset_channel_w(tap) * P + p0;
            for (std::size_t c = 0; c < g.ci; ++c) {
              const T* xc = xn + c * chan;
              const T* d = dcol + (c * taps + tap) * pc;
              for (std::size_t q = 0; q < pc; ++q) {
                const SampleSite<T>& site = s[q];
                const T v1 = xc[site.idx[0]], v2 = xc[site.idx[1]];
                const T v3 = xc[site.idx[2]], v4 = xc[site.idx[3]];
                dh_row[q] += d[q] * (site.dh[0] * v1 + site.dh[1] * v2 + site.dh[2] * v3 +
                                     site.dh[3] * v4);
                dw_row[q] += d[q] * (site.dw[0] * v1 + site.dw[1] * v2 + site.dw[2] * v3 +
                                     site.dw[3] * v4);
              }
            }
          }
        });
        if (!need_input_grad) return;
        T* dxn = grads.dx.data() + n * g.ci * chan;
        parallel_for(g.ci, [&](std::size_t c0, std::size_t c1) {
          for (std::size_t c = c0; c < c1; ++c) {
            T* dxc = dxn + c * chan;
            for (std::size_t tap = 0; tap < taps; ++tap) {
              const SampleSite<T>* s = sites.data() + tap * pc;
              const T* src = dcol + (c * taps + tap) * pc;
              for (std::size_t q = 0; q < pc; ++q) {
                const SampleSite<T>& site = s[q];
                for (int k = 0; k < 4; ++k) dxc[site.idx[k]] += site.w[k] * src[q];
              }
            }
          }
        });
      },
      grads.dw.data(), main.has_bias() ? grads.dbias.data() : nullptr, true);
  return grads;
}

template <typename T>
Tensor<T> d3d_forward(const Tensor<T>& x, const D3DLayer<T>& layer) {
  const std::size_t taps = layer.main.weight.rank() == 5 ? layer.main.weight.extent(2) *
                                                               layer.main.weight.extent(3) *
                                                               layer.main.weight.extent(4)
                                                         : kGridTaps;
  return deform_conv3d_forward(x, generate_offsets(x, layer.offset_gen, taps), layer.main);
}

template <typename T>
DeformGrads<T> d3d_backward(const Tensor<T>& x, const D3DLayer<T>& layer,
                            const Tensor<T>& offsets, const Tensor<T>& dy) {
  return deform_conv3d_backward(x, offsets, layer.main, dy, true);
}

#define D3D_INSTANTIATE(T)                                                                    \
  template T bilinear_sample(const Tensor<T>&, std::size_t, std::size_t, T, T);              \
  template Tensor<T> generate_offsets(const Tensor<T>&, const ConvWeights<T>&, std::size_t); \
  template Tensor<T> deform_conv3d_forward(const Tensor<T>&, const Tensor<T>&,               \
                                           const ConvWeights<T>&);                           \
  template DeformGrads<T> deform_conv3d_backward(const Tensor<T>&, const Tensor<T>&,         \
                                                 const ConvWeights<T>&, const Tensor<T>&,    \
                                                 bool);                                      \
  template Tensor<T> d3d_forward(const Tensor<T>&, const D3DLayer<T>&);                      \
  template DeformGrads<T> d3d_backward(const Tensor<T>&, const D3DLayer<T>&, const Tensor<T>&, \
                                       const Tensor<T>&);

D3D_INSTANTIATE(float)
D3D_INSTANTIATE(double)
#undef D3D_INSTANTIATE

}  // namespace d3d
