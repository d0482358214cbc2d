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

#include "d3d/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "d3d/data.hpp"

namespace d3d {

namespace {

constexpr std::size_t kWin = 11;
constexpr double kSigma = 1.5;

std::pair<std::size_t, std::size_t> plane_extents(const Tensor<float>& a, const char* op) {
  if (a.rank() == 2) return {a.extent(0), a.extent(1)};
  if (a.rank() == 3 && a.extent(0) == 1) return {a.extent(1), a.extent(2)};
  throw ShapeError(std::string(op) + " expects a single-channel frame, got " + shape_str(a.shape()));
}

std::vector<double> gauss_1d() {
  std::vector<double> g(kWin);
  double total = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWin / 2);
    g[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t H, std::size_t W,
                                 const std::vector<double>& g) {
  const std::size_t oh = H - kWin + 1, ow = W - kWin + 1;
  std::vector<double> rows(H * ow), out(oh * ow);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) acc += g[k] * src[y * W + x + k];
      rows[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> ssim_window() {
  const auto g = gauss_1d();
  std::vector<double> w(kWin * kWin);
  for (std::size_t i = 0; i < kWin; ++i)
    for (std::size_t j = 0; j < kWin; ++j) w[i * kWin + j] = g[i] * g[j];
  return w;
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const auto [H, W] = plane_extents(a, "ssim");
  if (H < kWin || W < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");
  const std::size_t n = H * W;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a[i];
    y[i] = b[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gauss_1d();
  const auto mx = filter_valid(x, H, W, g), my = filter_valid(y, H, W, g);
  const auto sxx = filter_valid(xx, H, W, g), syy = filter_valid(yy, H, W, g);
  const auto sxy = filter_valid(xy, H, W, g);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

SequenceReport evaluate_sequence(const std::string& name, const std::vector<Tensor<float>>& sr,
                                 const std::vector<Tensor<float>>& hr) {
  if (sr.size() != hr.size()) throw std::invalid_argument("evaluate_sequence: frame count mismatch");
  if (sr.size() <= 2 * kEdgeExclusion) {
    throw std::invalid_argument("evaluate_sequence: need more than " +
                                std::to_string(2 * kEdgeExclusion) + " frames");
  }
  const auto ys = to_luminance(sr), yh = to_luminance(hr);
  SequenceReport r;
  r.name = name;
  for (std::size_t i = kEdgeExclusion; i + kEdgeExclusion < sr.size(); ++i) {
    r.frames.push_back({i, psnr(ys[i], yh[i]), ssim(ys[i], yh[i])});
  }
  for (const auto& f : r.frames) {
    r.mean_psnr += f.psnr;
    r.mean_ssim += f.ssim;
  }
  r.mean_psnr /= static_cast<double>(r.frames.size());
  r.mean_ssim /= static_cast<double>(r.frames.size());
  return r;
}

void EvalReport::add(SequenceReport s) {
  sequences.push_back(std::move(s));
  mean_psnr = mean_ssim = 0.0;
  for (const auto& q : sequences) {
    mean_psnr += q.mean_psnr;
    mean_ssim += q.mean_ssim;
  }
  mean_psnr /= static_cast<double>(sequences.size());
  mean_ssim /= static_cast<double>(sequences.size());
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["mean_psnr"] = mean_psnr;
  j["mean_ssim"] = mean_ssim;
  j["sequences"] = nlohmann::ordered_json::array();
  for (const auto& s : sequences) {
    nlohmann::ordered_json js;
    js["name"] = s.name;
    js["mean_psnr"] = s.mean_psnr;
    js["mean_ssim"] = s.mean_ssim;
    js["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : s.frames) {
      js["frames"].push_back({{"index", f.index}, {"psnr", f.psnr}, {"ssim", f.ssim}});
    }
    j["sequences"].push_back(std::move(js));
  }
  return j.dump(2);
}

}  // namespace d3d
