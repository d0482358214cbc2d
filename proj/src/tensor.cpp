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

#include "d3d/tensor.hpp"

#include <numeric>

#include "d3d/simd.hpp"

namespace d3d {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("zero-sized extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  simd::active<T>().add(a.numel(), a.data(), b.data(), out.data());
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  simd::active<T>().relu(a.numel(), a.data(), out.data());
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add_inplace");
  simd::active<T>().add(a.numel(), a.data(), b.data(), a.data());
}

namespace {

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> ts, std::size_t axis) {
  if (ts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& ref = ts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat_channels: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& t : ts) {
    if (t.rank() != ref.size()) throw ShapeError("concat_channels: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (i != axis && t.extent(i) != ref[i]) {
        throw ShapeError("concat_channels: extent mismatch " + shape_str(t.shape()) + " vs " +
                         shape_str(ref));
      }
    }
    out_shape[axis] += t.extent(axis);
  }
  Tensor<T> out(out_shape);
  const AxisSplit os = split_at(out_shape, axis);
  std::size_t base = 0;
  for (const auto& t : ts) {
    const AxisSplit s = split_at(t.shape(), axis);
    const std::size_t block = s.extent * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(t.data() + o * block, block, out.data() + (o * os.extent + base) * os.inner);
    }
    base += s.extent;
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, std::size_t begin, std::size_t end,
                         std::size_t axis) {
  if (axis >= t.rank()) throw ShapeError("slice_channels: axis out of range");
  if (begin >= end || end > t.extent(axis)) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") for " + shape_str(t.shape()));
  }
  Shape out_shape = t.shape();
  out_shape[axis] = end - begin;
  Tensor<T> out(out_shape);
  const AxisSplit s = split_at(t.shape(), axis);
  const std::size_t block = (end - begin) * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(t.data() + (o * s.extent + begin) * s.inner, block, out.data() + o * block);
  }
  return out;
}

namespace {

struct ShuffleDims {
  std::size_t batch, c_out, h, w;
};

ShuffleDims shuffle_dims(const Shape& s, std::size_t r, bool forward) {
  if (s.size() != 3 && s.size() != 4) throw ShapeError("pixel_shuffle expects rank 3 or 4");
  if (r == 0) throw ShapeError("pixel_shuffle: factor must be positive");
  const std::size_t batch = s.size() == 4 ? s[0] : 1;
  const std::size_t c = s[s.size() - 3], h = s[s.size() - 2], w = s[s.size() - 1];
  if (forward) {
    if (c % (r * r) != 0) {
      throw ShapeError("pixel_shuffle: channels " + std::to_string(c) + " not divisible by " +
                       std::to_string(r * r));
    }
    return {batch, c / (r * r), h, w};
  }
  if (h % r != 0 || w % r != 0) throw ShapeError("pixel_unshuffle: extent not divisible");
  return {batch, c, h / r, w / r};
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& a, std::size_t r) {
  const ShuffleDims d = shuffle_dims(a.shape(), r, true);
  Shape out_shape = a.shape();
  const std::size_t k = out_shape.size();
  out_shape[k - 3] = d.c_out;
  out_shape[k - 2] = d.h * r;
  out_shape[k - 1] = d.w * r;
  Tensor<T> out(out_shape);
  const std::size_t ow = d.w * r;
  const std::size_t plane_out = d.h * r * ow;
  const std::size_t plane_in = d.h * d.w;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.c_out; ++c) {
      T* dst = out.data() + (n * d.c_out + c) * plane_out;
      for (std::size_t dy = 0; dy < r; ++dy) {
        for (std::size_t dx = 0; dx < r; ++dx) {
          const T* src = a.data() + ((n * d.c_out + c) * r * r + dy * r + dx) * plane_in;
          for (std::size_t h = 0; h < d.h; ++h) {
            for (std::size_t w = 0; w < d.w; ++w) {
              dst[(h * r + dy) * ow + w * r + dx] = src[h * d.w + w];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& a, std::size_t r) {
  const ShuffleDims d = shuffle_dims(a.shape(), r, false);
  Shape out_shape = a.shape();
  const std::size_t k = out_shape.size();
  out_shape[k - 3] = d.c_out * r * r;
  out_shape[k - 2] = d.h;
  out_shape[k - 1] = d.w;
  Tensor<T> out(out_shape);
  const std::size_t iw = d.w * r;
  const std::size_t plane_in = d.h * r * iw;
  const std::size_t plane_out = d.h * d.w;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t c = 0; c < d.c_out; ++c) {
      const T* src = a.data() + (n * d.c_out + c) * plane_in;
      for (std::size_t dy = 0; dy < r; ++dy) {
        for (std::size_t dx = 0; dx < r; ++dx) {
          T* dst = out.data() + ((n * d.c_out + c) * r * r + dy * r + dx) * plane_out;
          for (std::size_t h = 0; h < d.h; ++h) {
            for (std::size_t w = 0; w < d.w; ++w) {
              dst[h * d.w + w] = src[(h * r + dy) * iw + w * r + dx];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> temporal_fold(const Tensor<T>& a) {
  if (a.rank() != 5) throw ShapeError("temporal_fold expects [N,C,T,H,W], got " + shape_str(a.shape()));
  const std::size_t n = a.extent(0), c = a.extent(1), t = a.extent(2);
  const std::size_t plane = a.extent(3) * a.extent(4);
  Tensor<T> out({n, t * c, a.extent(3), a.extent(4)});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t ti = 0; ti < t; ++ti) {
        std::copy_n(a.data() + ((b * c + ci) * t + ti) * plane, plane,
                    out.data() + ((b * t + ti) * c + ci) * plane);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> temporal_unfold(const Tensor<T>& a, std::size_t frames) {
  if (a.rank() != 4 || frames == 0 || a.extent(1) % frames != 0) {
    throw ShapeError("temporal_unfold: bad shape " + shape_str(a.shape()));
  }
  const std::size_t n = a.extent(0), c = a.extent(1) / frames, t = frames;
  const std::size_t plane = a.extent(2) * a.extent(3);
  Tensor<T> out({n, c, t, a.extent(2), a.extent(3)});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t ti = 0; ti < t; ++ti) {
        std::copy_n(a.data() + ((b * t + ti) * c + ci) * plane, plane,
                    out.data() + ((b * c + ci) * t + ti) * plane);
      }
    }
  }
  return out;
}

template <typename T>
double sum(const Tensor<T>& a) {
  double s = 0.0;
  for (T v : a.span()) s += static_cast<double>(v);
  return s;
}

#define D3D_INSTANTIATE(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scalar_mul(const Tensor<T>&, T);                                     \
  template Tensor<T> relu(const Tensor<T>&);                                              \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>, std::size_t);            \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);                        \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> temporal_fold(const Tensor<T>&);                                     \
  template Tensor<T> temporal_unfold(const Tensor<T>&, std::size_t);                      \
  template double sum(const Tensor<T>&);

D3D_INSTANTIATE(float)
D3D_INSTANTIATE(double)
#undef D3D_INSTANTIATE

}  // namespace d3d
