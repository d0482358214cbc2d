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

#include "d3d/conv.hpp"

#include <string>

#include "conv_engine.hpp"

namespace d3d {

namespace detail {

ConvGeometry conv3d_geometry(const Shape& x, const Shape& w, const char* op) {
  if (x.size() != 4 && x.size() != 5) {
    throw ShapeError(std::string(op) + ": input must be [C,T,H,W] or [N,C,T,H,W], got " +
                     shape_str(x));
  }
  if (w.size() != 5) {
    throw ShapeError(std::string(op) + ": weight must be [Co,Ci,kT,kH,kW], got " + shape_str(w));
  }
  ConvGeometry g;
  g.batched = x.size() == 5;
  const std::size_t o = g.batched ? 1 : 0;
  g.batch = g.batched ? x[0] : 1;
  g.ci = x[o];
  g.t = x[o + 1];
  g.h = x[o + 2];
  g.w = x[o + 3];
  g.co = w[0];
  g.kt = w[2];
  g.kh = w[3];
  g.kw = w[4];
  if (w[1] != g.ci) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(g.ci) +
                     " channels but weight expects " + std::to_string(w[1]));
  }
  if (g.kt % 2 == 0 || g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel extents must be odd, got " + shape_str(w));
  }
  return g;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, std::size_t p0, std::size_t p1, T* col) {
  const std::size_t pc = p1 - p0;
  const long pt = static_cast<long>(g.kt / 2), ph = static_cast<long>(g.kh / 2),
             pw = static_cast<long>(g.kw / 2);
  const long T_ = static_cast<long>(g.t), H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  const std::size_t plane = g.h * g.w;
  for (std::size_t c = 0; c < g.ci; ++c) {
    const T* xc = x + c * g.t * plane;
    for (std::size_t kt = 0; kt < g.kt; ++kt) {
      for (std::size_t kh = 0; kh < g.kh; ++kh) {
        for (std::size_t kw = 0; kw < g.kw; ++kw) {
          const std::size_t r = ((c * g.kt + kt) * g.kh + kh) * g.kw + kw;
          T* dst = col + r * pc;
          const long dt = static_cast<long>(kt) - pt, dh = static_cast<long>(kh) - ph,
                     dw = static_cast<long>(kw) - pw;
          std::size_t p = p0;
          while (p < p1) {
            // Walk one output row segment at a time.
            const long t = static_cast<long>(p / plane);
            const long h = static_cast<long>((p / g.w) % g.h);
            const long w0 = static_cast<long>(p % g.w);
            const std::size_t run = std::min<std::size_t>(p1 - p, g.w - static_cast<std::size_t>(w0));
            const long it = t + dt, ih = h + dh;
            T* out = dst + (p - p0);
            if (it < 0 || it >= T_ || ih < 0 || ih >= H) {
              std::fill_n(out, run, T(0));
            } else {
              const T* src = xc + (static_cast<std::size_t>(it) * g.h + static_cast<std::size_t>(ih)) * g.w;
              for (std::size_t q = 0; q < run; ++q) {
                const long iw = w0 + static_cast<long>(q) + dw;
                out[q] = (iw >= 0 && iw < W) ? src[iw] : T(0);
              }
            }
            p += run;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* dcol, std::size_t p0, std::size_t p1, T* dx) {
  const std::size_t pc = p1 - p0;
  const long pt = static_cast<long>(g.kt / 2), ph = static_cast<long>(g.kh / 2),
             pw = static_cast<long>(g.kw / 2);
  const long T_ = static_cast<long>(g.t), H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  const std::size_t plane = g.h * g.w;
  parallel_for(g.ci, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      T* dxc = dx + c * g.t * plane;
      for (std::size_t kt = 0; kt < g.kt; ++kt) {
        for (std::size_t kh = 0; kh < g.kh; ++kh) {
          for (std::size_t kw = 0; kw < g.kw; ++kw) {
            const std::size_t r = ((c * g.kt + kt) * g.kh + kh) * g.kw + kw;
            const T* src = dcol + r * pc;
            const long dt = static_cast<long>(kt) - pt, dh = static_cast<long>(kh) - ph,
                       dw = static_cast<long>(kw) - pw;
            std::size_t p = p0;
            while (p < p1) {
              const long t = static_cast<long>(p / plane);
              const long h = static_cast<long>((p / g.w) % g.h);
              const long w0 = static_cast<long>(p % g.w);
              const std::size_t run =
                  std::min<std::size_t>(p1 - p, g.w - static_cast<std::size_t>(w0));
              const long it = t + dt, ih = h + dh;
              if (it >= 0 && it < T_ && ih >= 0 && ih < H) {
                T* dst = dxc + (static_cast<std::size_t>(it) * g.h + static_cast<std::size_t>(ih)) * g.w;
                const T* in = src + (p - p0);
                for (std::size_t q = 0; q < run; ++q) {
                  const long iw = w0 + static_cast<long>(q) + dw;
                  if (iw >= 0 && iw < W) dst[iw] += in[q];
                }
              }
              p += run;
            }
          }
        }
      }
    }
  });
}

template void im2col(const ConvGeometry&, const float*, std::size_t, std::size_t, float*);
template void im2col(const ConvGeometry&, const double*, std::size_t, std::size_t, double*);
template void col2im(const ConvGeometry&, const float*, std::size_t, std::size_t, float*);
template void col2im(const ConvGeometry&, const double*, std::size_t, std::size_t, double*);

}  // namespace detail

namespace {

template <typename T>
void check_bias(const ConvWeights<T>& p, const char* op) {
  if (p.has_bias() && (p.bias.rank() != 1 || p.bias.extent(0) != p.weight.extent(0))) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_str(p.bias.shape()) +
                     " does not match " + std::to_string(p.weight.extent(0)) + " output channels");
  }
}

Shape output_shape(const detail::ConvGeometry& g) {
  if (g.batched) return {g.batch, g.co, g.t, g.h, g.w};
  return {g.co, g.t, g.h, g.w};
}

bool is_pointwise(const detail::ConvGeometry& g) { return g.taps() == 1; }

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const ConvWeights<T>& p) {
  const auto g = detail::conv3d_geometry(x.shape(), p.weight.shape(), "conv3d_forward");
  check_bias(p, "conv3d_forward");
  Tensor<T> y(output_shape(g));
  const std::size_t sample = g.ci * g.positions();
  const std::size_t P = g.positions();
  detail::conv_forward_engine<T>(
      g, p.weight.data(), p.has_bias() ? p.bias.data() : nullptr,
      [&](std::size_t n, std::size_t p0, std::size_t p1, T* col) {
        const T* xn = x.data() + n * sample;
        if (is_pointwise(g)) {
          for (std::size_t c = 0; c < g.ci; ++c) std::copy(xn + c * P + p0, xn + c * P + p1, col + c * (p1 - p0));
        } else {
          detail::im2col(g, xn, p0, p1, col);
        }
      },
      y.data());
  return y;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, const ConvWeights<T>& p, const Tensor<T>& dy,
                             bool need_input_grad) {
  const auto g = detail::conv3d_geometry(x.shape(), p.weight.shape(), "conv3d_backward");
  check_bias(p, "conv3d_backward");
  require_same_shape(dy.shape(), output_shape(g), "conv3d_backward dy");
  ConvGrads<T> grads;
  if (need_input_grad) grads.dx = zeros_like(x);
  grads.dw = zeros_like(p.weight);
  if (p.has_bias()) grads.dbias = zeros_like(p.bias);
  const std::size_t sample = g.ci * g.positions();
  const std::size_t P = g.positions();
  detail::conv_backward_engine<T>(
      g, p.weight.data(), dy.data(),
      [&](std::size_t n, std::size_t p0, std::size_t p1, T* col) {
        const T* xn = x.data() + n * sample;
        if (is_pointwise(g)) {
          for (std::size_t c = 0; c < g.ci; ++c) std::copy(xn + c * P + p0, xn + c * P + p1, col + c * (p1 - p0));
        } else {
          detail::im2col(g, xn, p0, p1, col);
        }
      },
      [&](std::size_t n, std::size_t p0, std::size_t p1, const T* dcol) {
        T* dxn = grads.dx.data() + n * sample;
        if (is_pointwise(g)) {
          const std::size_t pc = p1 - p0;
          for (std::size_t c = 0; c < g.ci; ++c) {
            for (std::size_t q = 0; q < pc; ++q) dxn[c * P + p0 + q] += dcol[c * pc + q];
          }
        } else {
          detail::col2im(g, dcol, p0, p1, dxn);
        }
      },
      grads.dw.data(), p.has_bias() ? grads.dbias.data() : nullptr, need_input_grad);
  return grads;
}

namespace {

// 2-D convolution is the 3-D one with a single time slice and kT = 1.
template <typename T>
ConvWeights<T> lift_weights(const ConvWeights<T>& p) {
  const Shape& s = p.weight.shape();
  if (s.size() != 4) throw ShapeError("conv2d: weight must be [Co,Ci,kH,kW], got " + shape_str(s));
  return {p.weight.reshaped({s[0], s[1], 1, s[2], s[3]}), p.bias};
}

template <typename T>
Tensor<T> lift_input(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() == 3) return x.reshaped({s[0], 1, s[1], s[2]});
  if (s.size() == 4) return x.reshaped({s[0], s[1], 1, s[2], s[3]});
  throw ShapeError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(s));
}

template <typename T>
Tensor<T> drop_time(const Tensor<T>& y) {
  const Shape& s = y.shape();
  if (s.size() == 4) return y.reshaped({s[0], s[2], s[3]});
  return y.reshaped({s[0], s[1], s[3], s[4]});
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvWeights<T>& p) {
  return drop_time(conv3d_forward(lift_input(x), lift_weights(p)));
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvWeights<T>& p, const Tensor<T>& dy,
                             bool need_input_grad) {
  auto g = conv3d_backward(lift_input(x), lift_weights(p), lift_input(dy), need_input_grad);
  if (need_input_grad) g.dx = g.dx.reshaped(x.shape());
  g.dw = g.dw.reshaped(p.weight.shape());
  return g;
}

template Tensor<float> conv3d_forward(const Tensor<float>&, const ConvWeights<float>&);
template Tensor<double> conv3d_forward(const Tensor<double>&, const ConvWeights<double>&);
template ConvGrads<float> conv3d_backward(const Tensor<float>&, const ConvWeights<float>&,
                                          const Tensor<float>&, bool);
template ConvGrads<double> conv3d_backward(const Tensor<double>&, const ConvWeights<double>&,
                                           const Tensor<double>&, bool);
template Tensor<float> conv2d_forward(const Tensor<float>&, const ConvWeights<float>&);
template Tensor<double> conv2d_forward(const Tensor<double>&, const ConvWeights<double>&);
template ConvGrads<float> conv2d_backward(const Tensor<float>&, const ConvWeights<float>&,
                                          const Tensor<float>&, bool);
template ConvGrads<double> conv2d_backward(const Tensor<double>&, const ConvWeights<double>&,
                                           const Tensor<double>&, bool);

}  // namespace d3d
