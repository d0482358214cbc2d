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

#include "d3d/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <png.h>

#include <json.hpp>

#include "d3d/tensor_io.hpp"

namespace d3d {

double keys_cubic(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<std::size_t> index;  // [out * per + j]
  std::vector<double> weight;
  std::size_t per = 0;
};

Taps resample_taps(std::size_t in_len, std::size_t out_len, double scale) {
  const double width = scale < 1.0 ? 4.0 / scale : 4.0;
  Taps t;
  t.per = static_cast<std::size_t>(std::ceil(width)) + 2;
  t.index.resize(out_len * t.per);
  t.weight.resize(out_len * t.per);
  for (std::size_t o = 0; o < out_len; ++o) {
    const double u = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const long left = static_cast<long>(std::floor(u - width / 2.0));
    double total = 0.0;
    for (std::size_t j = 0; j < t.per; ++j) {
      const long k = left + static_cast<long>(j);
      const double d = u - static_cast<double>(k);
      const double w = scale < 1.0 ? scale * keys_cubic(scale * d) : keys_cubic(d);
      t.weight[o * t.per + j] = w;
      t.index[o * t.per + j] =
          static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(in_len) - 1));
      total += w;
    }
    for (std::size_t j = 0; j < t.per; ++j) t.weight[o * t.per + j] /= total;
  }
  return t;
}

std::size_t scaled_extent(std::size_t n, double scale) {
  const double out = static_cast<double>(n) * scale;
  if (out < 1.0 || out != std::floor(out)) {
    throw ShapeError("bicubic_resample: extent " + std::to_string(n) + " is not divisible by the scale");
  }
  return static_cast<std::size_t>(out);
}

}  // namespace

template <typename T>
Tensor<T> bicubic_resample(const Tensor<T>& img, double scale) {
  if (!(scale == 0.25 || scale == 0.5 || scale == 1.0 || scale == 2.0 || scale == 4.0)) {
    throw std::invalid_argument("bicubic_resample: unsupported scale " + std::to_string(scale));
  }
  if (img.rank() < 2) throw ShapeError("bicubic_resample expects [..., H, W]");
  if (scale == 1.0) return img;
  const std::size_t H = img.extent(img.rank() - 2), W = img.extent(img.rank() - 1);
  const std::size_t oh = scaled_extent(H, scale), ow = scaled_extent(W, scale);
  const std::size_t planes = img.numel() / (H * W);
  const Taps th = resample_taps(H, oh, scale), tw = resample_taps(W, ow, scale);
  Shape shape = img.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  Tensor<T> out(shape);
  std::vector<double> rows(H * ow);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = img.data() + pl * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < tw.per; ++j) {
          acc += tw.weight[x * tw.per + j] * static_cast<double>(src[y * W + tw.index[x * tw.per + j]]);
        }
        rows[y * ow + x] = acc;
      }
    }
    T* dst = out.data() + pl * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < th.per; ++j) {
          acc += th.weight[y * th.per + j] * rows[th.index[y * th.per + j] * ow + x];
        }
        dst[y * ow + x] = static_cast<T>(acc);
      }
    }
  }
  return out;
}

namespace {

struct Wave {
  double fy, fx, amp, phase;
};

double smooth_mask(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

template <typename Background>
Tensor<float> render(const Background& bg, const std::vector<SynthPattern>& patterns, std::size_t t,
                     std::size_t height, std::size_t width) {
  Tensor<float> f({1, height, width});
  const double tt = static_cast<double>(t);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double v = bg(static_cast<double>(y), static_cast<double>(x));
      for (const auto& p : patterns) {
        const double dy = static_cast<double>(y) - (p.cy + tt * p.vy);
        const double dx = static_cast<double>(x) - (p.cx + tt * p.vx);
        const double dist = p.square ? std::max(std::abs(dy), std::abs(dx)) - p.radius
                                     : std::hypot(dy, dx) - p.radius;
        const double m = smooth_mask(dist);
        if (m <= 0.0) continue;
        const double phase = (dy * std::sin(p.angle) + dx * std::cos(p.angle)) / p.wavelength;
        const double tex = p.base + p.amp * std::cos(2.0 * std::numbers::pi * phase);
        v = v * (1.0 - m) + tex * m;
      }
      f[y * width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return f;
}

}  // namespace

Tensor<float> render_frame(double background, const std::vector<SynthPattern>& patterns,
                           std::size_t t, std::size_t height, std::size_t width) {
  return render([background](double, double) { return background; }, patterns, t, height, width);
}

std::vector<Tensor<float>> synth_sequence(std::uint64_t seed, std::size_t frames, std::size_t height,
                                          std::size_t width, const SynthOptions& opt) {
  if (frames == 0 || height == 0 || width == 0) throw std::invalid_argument("synth_sequence: empty size");
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  };
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    const double f = uni(0.008, 0.05), dir = uni(0.0, kTwoPi);
    waves.push_back({f * std::sin(dir), f * std::cos(dir), uni(0.02, 0.05), uni(0.0, kTwoPi)});
  }
  for (int i = 0; i < 3; ++i) {
    const double f = uni(0.06, 0.12), dir = uni(0.0, kTwoPi);
    waves.push_back({f * std::sin(dir), f * std::cos(dir), uni(0.01, 0.03), uni(0.0, kTwoPi)});
  }
  auto bg = [&waves](double y, double x) {
    double v = 0.5;
    for (const auto& w : waves) v += w.amp * std::cos(kTwoPi * (w.fy * y + w.fx * x) + w.phase);
    return v;
  };

  const auto count = static_cast<std::size_t>(
      std::uniform_int_distribution<std::size_t>(opt.min_patterns, opt.max_patterns)(rng));
  const double size = static_cast<double>(std::min(height, width));
  std::vector<SynthPattern> patterns;
  for (std::size_t i = 0; i < count; ++i) {
    SynthPattern p;
    p.radius = uni(size / 10.0, size / 4.0);
    p.square = uni(0.0, 1.0) < 0.5;
    p.cy = uni(0.0, static_cast<double>(height));
    p.cx = uni(0.0, static_cast<double>(width));
    const double speed = uni(0.0, opt.max_speed), dir = uni(0.0, kTwoPi);
    p.vy = speed * std::sin(dir);
    p.vx = speed * std::cos(dir);
    p.base = uni(0.15, 0.85);
    p.amp = uni(0.05, 0.15);
    p.wavelength = uni(4.0, 12.0);
    p.angle = uni(0.0, std::numbers::pi);
    patterns.push_back(p);
  }
  std::vector<Tensor<float>> out;
  out.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) out.push_back(render(bg, patterns, t, height, width));
  return out;
}

namespace {

Tensor<float> crop(const Tensor<float>& img, std::size_t y0, std::size_t x0, std::size_t h,
                   std::size_t w) {
  const std::size_t W = img.extent(img.rank() - 1);
  Tensor<float> out({1, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(img.data() + (y0 + y) * W + x0, w, out.data() + y * w);
  }
  return out;
}

}  // namespace

VideoSample crop_sample(const std::vector<Tensor<float>>& hr_frames,
                        const std::vector<Tensor<float>>& lr_frames, std::size_t r,
                        std::size_t patch, std::size_t oy, std::size_t ox) {
  const std::size_t T = lr_frames.size();
  if (T == 0 || T % 2 == 0 || hr_frames.size() != T) {
    throw std::invalid_argument("crop_sample: need an odd number of frames");
  }
  const std::size_t h = lr_frames[0].extent(1), w = lr_frames[0].extent(2);
  if (oy + patch > h || ox + patch > w) throw std::out_of_range("crop_sample: patch outside frame");
  VideoSample s;
  s.lr = Tensor<float>({1, T, patch, patch});
  for (std::size_t t = 0; t < T; ++t) {
    auto c = crop(lr_frames[t], oy, ox, patch, patch);
    std::copy_n(c.data(), c.numel(), s.lr.data() + t * patch * patch);
  }
  s.hr = crop(hr_frames[T / 2], oy * r, ox * r, patch * r, patch * r);
  s.id = "y" + std::to_string(oy) + "x" + std::to_string(ox);
  return s;
}

VideoSample make_sample(const std::vector<Tensor<float>>& hr_frames, std::size_t r,
                        std::size_t patch, std::mt19937_64& rng) {
  std::vector<Tensor<float>> lr;
  for (const auto& f : hr_frames) lr.push_back(bicubic_resample(f, 1.0 / static_cast<double>(r)));
  const std::size_t h = lr.at(0).extent(1), w = lr.at(0).extent(2);
  if (patch > h || patch > w) throw std::invalid_argument("make_sample: patch larger than frame");
  const std::size_t oy = std::uniform_int_distribution<std::size_t>(0, h - patch)(rng);
  const std::size_t ox = std::uniform_int_distribution<std::size_t>(0, w - patch)(rng);
  return crop_sample(hr_frames, lr, r, patch, oy, ox);
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& a) {
  const std::size_t H = a.extent(a.rank() - 2), W = a.extent(a.rank() - 1);
  Tensor<T> out(a.shape());
  for (std::size_t pl = 0; pl < a.numel() / (H * W); ++pl)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        out[(pl * H + y) * W + x] = a[(pl * H + y) * W + (W - 1 - x)];
  return out;
}

template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& a) {
  const std::size_t H = a.extent(a.rank() - 2), W = a.extent(a.rank() - 1);
  Tensor<T> out(a.shape());
  for (std::size_t pl = 0; pl < a.numel() / (H * W); ++pl)
    for (std::size_t y = 0; y < H; ++y)
      std::copy_n(a.data() + (pl * H + (H - 1 - y)) * W, W, out.data() + (pl * H + y) * W);
  return out;
}

template <typename T>
Tensor<T> rotate90(const Tensor<T>& a, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return a;
  const std::size_t H = a.extent(a.rank() - 2), W = a.extent(a.rank() - 1);
  Shape s = a.shape();
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  Tensor<T> out(s);
  // Counter-clockwise: out(i, j) = a(j, W - 1 - i), out is W x H.
  for (std::size_t pl = 0; pl < a.numel() / (H * W); ++pl)
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t j = 0; j < H; ++j)
        out[(pl * W + i) * H + j] = a[(pl * H + j) * W + (W - 1 - i)];
  return rotate90(out, k - 1);
}

template <typename T>
Tensor<T> dihedral(const Tensor<T>& a, bool flip_h, int quarter_turns) {
  return rotate90(flip_h ? flip_horizontal(a) : a, quarter_turns);
}

VideoSample augment(const VideoSample& s, std::mt19937_64& rng) {
  const int k = std::uniform_int_distribution<int>(0, 7)(rng);
  const bool flip = k >= 4;
  const int turns = k % 4;
  return VideoSample{dihedral(s.lr, flip, turns), dihedral(s.hr, flip, turns), s.id};
}

Tensor<float> rgb_to_luminance(const Tensor<float>& rgb) {
  if (rgb.rank() != 3 || rgb.extent(0) != 3) {
    throw ShapeError("rgb_to_luminance expects [3,H,W], got " + shape_str(rgb.shape()));
  }
  const std::size_t n = rgb.extent(1) * rgb.extent(2);
  Tensor<float> y({1, rgb.extent(1), rgb.extent(2)});
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rgb[i], g = rgb[n + i], b = rgb[2 * n + i];
    y[i] = static_cast<float>((65.481 * r + 128.553 * g + 24.966 * b) / 255.0 + 16.0 / 255.0);
  }
  return y;
}

void save_frame(const Tensor<float>& frame, const std::filesystem::path& path) {
  if (frame.rank() != 3 || (frame.extent(0) != 1 && frame.extent(0) != 3)) {
    throw ShapeError("save_frame expects [1,H,W] or [3,H,W], got " + shape_str(frame.shape()));
  }
  const std::size_t c = frame.extent(0), h = frame.extent(1), w = frame.extent(2);
  std::vector<png_byte> bytes(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(std::round(frame[(ch * h + y) * w + x] * 255.0), 0.0, 255.0);
        bytes[(y * w + x) * c + ch] = static_cast<png_byte>(v);
      }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write " + path.string() + ": " + img.message);
  }
}

Tensor<float> load_frame(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("cannot read " + path.string() + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t c = color ? 3 : 1, h = img.height, w = img.width;
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("cannot decode " + path.string() + ": " + img.message);
  }
  Tensor<float> out({c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(ch * h + y) * w + x] = static_cast<float>(bytes[(y * w + x) * c + ch] / 255.0);
  return out;
}

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%04zu.png", index);
  return dir / name;
}

std::vector<Tensor<float>> load_sequence(const std::filesystem::path& dir) {
  std::vector<Tensor<float>> frames;
  for (std::size_t i = 0; std::filesystem::exists(frame_path(dir, i)); ++i) {
    frames.push_back(load_frame(frame_path(dir, i)));
  }
  if (frames.empty()) throw std::runtime_error("no frame_0000.png in " + dir.string());
  return frames;
}

std::vector<Tensor<float>> to_luminance(const std::vector<Tensor<float>>& frames) {
  std::vector<Tensor<float>> out;
  for (const auto& f : frames) out.push_back(f.extent(0) == 3 ? rgb_to_luminance(f) : f);
  return out;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["seed"] = seed;
  j["sequences"] = nlohmann::json::array();
  for (const auto& e : sequences) {
    j["sequences"].push_back({{"dir", e.dir}, {"frames", e.frames}, {"split", e.split}});
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing dataset manifest " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(is);
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& e : j.at("sequences")) {
      m.sequences.push_back({e.at("dir").get<std::string>(), e.at("frames").get<std::size_t>(),
                             e.value("split", std::string("train"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

#define D3D_INSTANTIATE(T)                                       \
  template Tensor<T> bicubic_resample(const Tensor<T>&, double); \
  template Tensor<T> flip_horizontal(const Tensor<T>&);          \
  template Tensor<T> flip_vertical(const Tensor<T>&);            \
  template Tensor<T> rotate90(const Tensor<T>&, int);            \
  template Tensor<T> dihedral(const Tensor<T>&, bool, int);

D3D_INSTANTIATE(float)
D3D_INSTANTIATE(double)
#undef D3D_INSTANTIATE

}  // namespace d3d
