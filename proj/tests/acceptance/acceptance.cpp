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

// Acceptance run: one PASS/FAIL/SKIP line per criterion.
//
// Soft criteria print their outcome but do not affect the exit status.
// D3D_VID4=<dir> enables the corpus check (one sub-directory of PNG frames
// per sequence).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "d3d/conv.hpp"
#include "d3d/deform_conv.hpp"
#include "d3d/metrics.hpp"
#include "d3d/network.hpp"
#include "d3d/pipeline.hpp"
#include "support/finite_diff.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace d3d;
using d3d::testing::fd_max_rel_error;
using d3d::testing::max_rel_diff;
using d3d::testing::naive_conv3d;
using d3d::testing::naive_deform_conv3d;
using d3d::testing::offsets_away_from_kinks;
using d3d::testing::random_tensor;

namespace {

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
  std::vector<std::string> log;  ///< numeric trace compared by the determinism check
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T, typename U>
Tensor<T> cast(const Tensor<U>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = static_cast<T>(a[i]);
  return out;
}

// 1 -------------------------------------------------------------------------

Outcome reduction_oracle() {
  constexpr int kConfigs = 24;
  const auto t0 = Clock::now();
  Outcome o;
  std::mt19937_64 rng(2024);
  auto ext = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  int exact64 = 0;
  double worst32 = 0.0;
  for (int i = 0; i < kConfigs; ++i) {
    const std::size_t ci = ext(1, 4), co = ext(1, 4), T = ext(1, 8), H = ext(1, 8), W = ext(1, 8);
    const auto x = random_tensor<double>({ci, T, H, W}, 10 * i + 1);
    ConvWeights<double> main{random_tensor<double>({co, ci, 3, 3, 3}, 10 * i + 2),
                             random_tensor<double>({co}, 10 * i + 3)};
    ConvWeights<double> gen{zeros<double>({kOffsetChannels, ci, 3, 3, 3}), zeros<double>({kOffsetChannels})};
    const auto ref = conv3d_forward(x, main);
    const auto layer = d3d_forward(x, D3DLayer<double>{main, gen});
    const auto direct = deform_conv3d_forward(x, zeros<double>({kOffsetChannels, T, H, W}), main);
    if (layer == ref && direct == ref) ++exact64;

    const auto xf = cast<float>(x);
    ConvWeights<float> mf{cast<float>(main.weight), cast<float>(main.bias)};
    ConvWeights<float> gf{zeros<float>({kOffsetChannels, ci, 3, 3, 3}), zeros<float>({kOffsetChannels})};
    worst32 = std::max(worst32, max_rel_diff(d3d_forward(xf, D3DLayer<float>{mf, gf}), conv3d_forward(xf, mf)));
    o.log.push_back(fmt("cfg %d %zu %zu %zu %zu %zu", i, ci, co, T, H, W));
  }
  const double secs = seconds_since(t0);
  o.pass = exact64 == kConfigs && worst32 <= 1e-6 && secs < 60.0;
  o.detail = fmt("%d/%d configs exact in f64, f32 max rel %.3g (<= 1e-6), %.1fs (< 60s)", exact64, kConfigs,
                 worst32, secs);
  o.log.push_back(fmt("f32 %.17g", worst32));
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome gradient_suite() {
  constexpr int kInstances = 5;
  constexpr double kTol = 1e-5;
  const auto t0 = Clock::now();
  Outcome o;
  std::vector<std::pair<std::string, double>> rows;
  auto note = [&rows](const std::string& name, double err) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.first == name; });
    if (it == rows.end()) rows.emplace_back(name, err);
    else it->second = std::max(it->second, err);
  };
  for (int i = 0; i < kInstances; ++i) {
    const std::uint64_t s = 1000 + 100 * i;
    {
      const auto x = random_tensor<double>({2, 3, 4, 5}, s + 1);
      ConvWeights<double> p{random_tensor<double>({3, 2, 3, 3, 3}, s + 2), random_tensor<double>({3}, s + 3)};
      const auto probe = random_tensor<double>({3, 3, 4, 5}, s + 4);
      const auto g = conv3d_backward(x, p, probe);
      note("conv3d/input", fd_max_rel_error([&](const TensorD& v) { return conv3d_forward(v, p); }, x, probe, g.dx));
      note("conv3d/weight", fd_max_rel_error([&](const TensorD& v) { return conv3d_forward(x, {v, p.bias}); },
                                             p.weight, probe, g.dw));
      note("conv3d/bias", fd_max_rel_error([&](const TensorD& v) { return conv3d_forward(x, {p.weight, v}); },
                                           p.bias, probe, g.dbias));
    }
    {
      const auto x = random_tensor<double>({2, 5, 6}, s + 5);
      ConvWeights<double> p{random_tensor<double>({3, 2, 3, 3}, s + 6), random_tensor<double>({3}, s + 7)};
      const auto probe = random_tensor<double>({3, 5, 6}, s + 8);
      const auto g = conv2d_backward(x, p, probe);
      note("conv2d/input", fd_max_rel_error([&](const TensorD& v) { return conv2d_forward(v, p); }, x, probe, g.dx));
      note("conv2d/weight", fd_max_rel_error([&](const TensorD& v) { return conv2d_forward(x, {v, p.bias}); },
                                             p.weight, probe, g.dw));
      note("conv2d/bias", fd_max_rel_error([&](const TensorD& v) { return conv2d_forward(x, {p.weight, v}); },
                                           p.bias, probe, g.dbias));
    }
    {
      const auto x = random_tensor<double>({2, 3, 4, 5}, s + 9);
      const auto off = offsets_away_from_kinks({kOffsetChannels, 3, 4, 5}, s + 10, 1);
      ConvWeights<double> p{random_tensor<double>({2, 2, 3, 3, 3}, s + 11), random_tensor<double>({2}, s + 12)};
      const auto probe = random_tensor<double>({2, 3, 4, 5}, s + 13);
      const auto g = deform_conv3d_backward(x, off, p, probe);
      note("d3d/input", fd_max_rel_error([&](const TensorD& v) { return deform_conv3d_forward(v, off, p); }, x,
                                         probe, g.dx));
      note("d3d/weight", fd_max_rel_error(
                             [&](const TensorD& v) { return deform_conv3d_forward(x, off, {v, p.bias}); },
                             p.weight, probe, g.dw));
      note("d3d/bias", fd_max_rel_error(
                           [&](const TensorD& v) { return deform_conv3d_forward(x, off, {p.weight, v}); },
                           p.bias, probe, g.dbias));
      note("d3d/offsets", fd_max_rel_error([&](const TensorD& v) { return deform_conv3d_forward(x, v, p); }, off,
                                           probe, g.doffsets));
    }
  }
  bool ok = true;
  std::string summary;
  for (const auto& [name, err] : rows) {
    ok = ok && err < kTol;
    summary += fmt("%s %.2g, ", name.c_str(), err);
    o.log.push_back(fmt("%s %.17g", name.c_str(), err));
  }
  const double secs = seconds_since(t0);
  o.pass = ok && secs < 300.0;
  o.detail = fmt("%d instances each; %smax < 1e-5, %.1fs (< 300s)", kInstances, summary.c_str(), secs);
  return o;
}

// 3 -------------------------------------------------------------------------

Outcome brute_force() {
  constexpr int kInstances = 12;
  Outcome o;
  double conv_worst = 0.0, d3d_worst = 0.0, conv32 = 0.0, d3d32 = 0.0;
  std::mt19937_64 rng(77);
  auto ext = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t ci = ext(1, 3), co = ext(1, 3), T = ext(1, 5), H = ext(2, 7), W = ext(2, 7);
    const auto x = random_tensor<double>({ci, T, H, W}, 500 + i);
    ConvWeights<double> p{random_tensor<double>({co, ci, 3, 3, 3}, 600 + i), random_tensor<double>({co}, 700 + i)};
    const auto conv_want = naive_conv3d(x, p.weight, p.bias);
    conv_worst = std::max(conv_worst, max_rel_diff(conv3d_forward(x, p), conv_want));

    // Full layer: generator output by the conv oracle, then the per-tap
    // bilinear oracle.
    ConvWeights<double> gen{random_tensor<double>({kOffsetChannels, ci, 3, 3, 3}, 800 + i, -0.3, 0.3),
                            random_tensor<double>({kOffsetChannels}, 900 + i, -1.5, 1.5)};
    const auto field = naive_conv3d(x, gen.weight, gen.bias);
    const auto want = naive_deform_conv3d(x, field, p.weight, p.bias);
    d3d_worst = std::max(d3d_worst, max_rel_diff(d3d_forward(x, D3DLayer<double>{p, gen}), want));

    // Informational: f32 kernels against the same f64 oracles.
    const auto xf = cast<float>(x);
    ConvWeights<float> pf{cast<float>(p.weight), cast<float>(p.bias)};
    ConvWeights<float> gf{cast<float>(gen.weight), cast<float>(gen.bias)};
    conv32 = std::max(conv32, max_rel_diff(cast<double>(conv3d_forward(xf, pf)), conv_want));
    d3d32 = std::max(d3d32, max_rel_diff(cast<double>(d3d_forward(xf, D3DLayer<float>{pf, gf})), want));
    o.log.push_back(fmt("inst %d %zu %zu %zu %zu %zu", i, ci, co, T, H, W));
  }
  o.pass = conv_worst <= 1e-6 && d3d_worst <= 1e-6;
  o.detail = fmt("%d instances each, f64; conv3d max rel %.3g, d3d max rel %.3g (<= 1e-6); f32 kernels: %.3g, %.3g",
                 kInstances, conv_worst, d3d_worst, conv32, d3d32);
  o.log.push_back(fmt("%.17g %.17g %.17g %.17g", conv_worst, d3d_worst, conv32, d3d32));
  return o;
}

// 4, 5 ----------------------------------------------------------------------

Outcome parameter_accounting(bool& soft_total_ok, std::string& soft_detail) {
  Outcome o;
  const std::size_t branch = offset_branch_params(64);
  NetworkConfig d, c;
  c.block = BlockKind::kC3D;
  const std::size_t delta = count_params(d) - count_params(c);
  const double rel = std::abs(static_cast<double>(branch) - 0.19e6) / 0.19e6;
  o.pass = branch == 186732 && rel <= 0.02 && delta == 5 * branch;
  const double total = static_cast<double>(count_params(d));
  const double dev = (total - 2.58e6) / 2.58e6;
  soft_total_ok = std::abs(dev) <= 0.15;
  soft_detail = fmt("total %zu vs 2.58M: %+.1f%% (band +-15%%)", count_params(d), 100.0 * dev);
  o.detail = fmt("offset branch %zu (%.1f%% from 0.19M, <= 2%%), D3D-C3D delta %zu = 5 x %zu", branch, 100.0 * rel,
                 delta, branch);
  o.log.push_back(fmt("%zu %zu %zu", branch, delta, count_params(d)));
  return o;
}

Outcome flops_accounting() {
  Outcome o;
  const double flops = static_cast<double>(count_flops(NetworkConfig{}, 1280, 720));
  const double ratio = flops / 408.82e9;
  o.pass = ratio >= 0.5 && ratio <= 2.0;
  o.detail = fmt("count_flops(1280x720) = %.2fG, ratio %.2f to 408.82G (band 0.5-2)", flops / 1e9, ratio);
  o.log.push_back(fmt("%.17g", flops));
  return o;
}

// 6 -------------------------------------------------------------------------

struct DeskScale {
  std::size_t epochs = 0;
  std::size_t steps_per_epoch = 0;
  std::size_t halve_every = 0;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  std::size_t steps() const { return epochs * steps_per_epoch; }
};

RunConfig desk_config(BlockKind block, std::size_t frames, const fs::path& data, const DeskScale& d) {
  RunConfig cfg;
  cfg.net.frames = frames;
  cfg.net.block = block;
  cfg.net.channels = 8;
  cfg.net.res_blocks = 2;
  cfg.net.recon_blocks = 2;
  cfg.net.bicubic_skip = true;
  cfg.lr = 1e-3;
  cfg.halve_every = d.halve_every;
  cfg.epochs = d.epochs;
  cfg.steps_per_epoch = d.steps_per_epoch;
  cfg.batch = d.batch;
  cfg.patch = 16;
  cfg.seed = d.seed;
  cfg.sequences = 50;
  cfg.test_sequences = 10;
  cfg.frames_per_sequence = 11;
  cfg.height = 96;
  cfg.width = 96;
  cfg.data = data;
  return cfg;
}

struct TrainedVariant {
  std::string name;
  double psnr = 0;
  std::string log;
};

TrainedVariant run_variant(const std::string& name, const RunConfig& cfg,
                           const std::vector<LoadedSequence>& train_set,
                           const std::vector<LoadedSequence>& test_set, std::size_t limit_steps = 0) {
  RunConfig c = cfg;
  if (limit_steps) {
    // Global steps 0..limit-1 of epoch 0, the same batches and lr as the full run.
    c.epochs = 1;
    c.steps_per_epoch = limit_steps;
  }
  std::ostringstream log;
  const auto res = train(c, train_set, initial_state(c), &log);
  TrainedVariant v{name, 0.0, log.str()};
  if (!limit_steps) v.psnr = evaluate_model(res.state.model, test_set).mean_psnr;
  return v;
}

constexpr DeskScale kDesk{8, 200, 2, 4, 1};

Outcome desk_training(std::vector<TrainedVariant>& trained) {
  const auto t0 = Clock::now();
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "d3d_acceptance_data";
  fs::remove_all(root);
  const auto base = desk_config(BlockKind::kD3D, 7, root, kDesk);
  synth_dataset(base, root);
  const auto train_set = load_split(root, "train", 4), test_set = load_split(root, "test", 4);
  const double bicubic = evaluate_bicubic(test_set, 4).mean_psnr;

  trained.push_back(run_variant("d3d-7", base, train_set, test_set));
  trained.push_back(run_variant("c3d-7", desk_config(BlockKind::kC3D, 7, root, kDesk), train_set, test_set));
  trained.push_back(run_variant("d3d-3", desk_config(BlockKind::kD3D, 3, root, kDesk), train_set, test_set));
  const double d7 = trained[0].psnr, c7 = trained[1].psnr, d3 = trained[2].psnr;
  const double secs = seconds_since(t0);
  const bool a = d7 - bicubic >= 1.0, b = d7 >= c7, c = d7 >= d3;
  o.pass = a && b && c && secs <= 1800.0;
  o.detail = fmt(
      "%zu steps, %zu train / %zu test seqs; bicubic %.3f dB; (a) d3d-7 %.3f (%+.3f, need >= +1.0) %s; "
      "(b) c3d-7 %.3f %s; (c) d3d-3 %.3f %s; %.0fs (<= 1800s)",
      kDesk.steps(), train_set.size(), test_set.size(), bicubic, d7, d7 - bicubic, a ? "ok" : "MISS", c7,
      b ? "ok" : "MISS", d3, c ? "ok" : "MISS", secs);
  o.log.push_back(fmt("bicubic %.17g", bicubic));
  for (const auto& v : trained) {
    o.log.push_back(fmt("%s %.17g", v.name.c_str(), v.psnr));
    o.log.push_back(v.log);
  }
  fs::remove_all(root);
  return o;
}

// 7 -------------------------------------------------------------------------

Outcome metric_checks() {
  Outcome o;
  const auto a = random_tensor<float>({1, 40, 36}, 5, 0.1, 0.8);
  TensorF b = a;
  for (auto& v : b.span()) v += 1.0f / 255.0f;
  const double p = psnr(a, b);
  const double self = ssim(a, a);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = random_tensor<float>({1, 24, 30}, 40 + s, 0.0, 1.0);
    auto y = x;
    const auto n = random_tensor<float>({1, 24, 30}, 50 + s, -0.2, 0.2);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::clamp(y[i] + n[i], 0.0f, 1.0f);
    worst = std::max(worst, std::abs(ssim(x, y) - d3d::testing::naive_ssim(x, y)));
  }
  o.pass = std::abs(p - 48.131) <= 1e-3 && std::abs(self - 1.0) <= 1e-9 && worst <= 1e-6;
  o.detail = fmt("PSNR(1/255 offset) %.4f dB (48.131 +- 0.001), |SSIM(a,a)-1| %.2g (<= 1e-9), "
                 "SSIM vs windowed oracle %.2g (<= 1e-6)",
                 p, std::abs(self - 1.0), worst);
  o.log.push_back(fmt("%.17g %.17g %.17g", p, self, worst));
  return o;
}

// 8 -------------------------------------------------------------------------

std::vector<TensorF> load_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<TensorF> frames;
  for (const auto& f : files) {
    auto img = load_frame(f);
    // Crop to a multiple of the scale.
    const std::size_t c = img.extent(0), h = img.extent(1) / 4 * 4, w = img.extent(2) / 4 * 4;
    TensorF out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(img.data() + (ch * img.extent(1) + y) * img.extent(2), w, out.data() + (ch * h + y) * w);
    frames.push_back(std::move(out));
  }
  return frames;
}

Outcome corpus_check() {
  Outcome o;
  const char* dir = std::getenv("D3D_VID4");
  if (!dir || !*dir) {
    o.skipped = true;
    o.detail = "D3D_VID4 not set";
    return o;
  }
  EvalReport report;
  std::vector<fs::path> seqs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) seqs.push_back(e.path());
  std::sort(seqs.begin(), seqs.end());
  for (const auto& s : seqs) {
    const auto hr = to_luminance(load_pngs(s));
    if (hr.empty()) continue;
    std::vector<TensorF> lr;
    for (const auto& f : hr) lr.push_back(bicubic_resample(f, 0.25));
    auto sr = bicubic_upscale(lr, 4);
    for (auto& f : sr)
      for (auto& v : f.span()) v = std::clamp(v, 0.0f, 1.0f);
    report.add(evaluate_sequence(s.filename().string(), sr, hr));
  }
  if (report.sequences.empty()) {
    o.detail = std::string("no PNG sequences under ") + dir;
    return o;
  }
  o.pass = std::abs(report.mean_psnr - 23.76) <= 0.15 && std::abs(report.mean_ssim - 0.631) <= 0.01;
  o.detail = fmt("%zu sequences; bicubic x4 %.3f dB / %.4f (23.76 +- 0.15 / 0.631 +- 0.01)", report.sequences.size(),
                 report.mean_psnr, report.mean_ssim);
  return o;
}

// 9 -------------------------------------------------------------------------

std::string joined(const std::vector<Outcome>& runs) {
  std::string s;
  for (const auto& r : runs)
    for (const auto& l : r.log) s += l + "\n";
  return s;
}

void print(int id, const char* name, const Outcome& o, bool soft = false) {
  const char* tag = o.skipped ? "SKIP" : o.pass ? "PASS" : soft ? "FAIL (soft)" : "FAIL";
  std::printf("[%s] %d %s: %s\n", tag, id, name, o.detail.c_str());
  std::fflush(stdout);
}

}  // namespace

int main() {
  bool hard_ok = true;
  auto hard = [&hard_ok](const Outcome& o) { hard_ok = hard_ok && (o.pass || o.skipped); };

  std::vector<Outcome> first;
  first.push_back(reduction_oracle());
  print(1, "reduction oracle", first.back());
  hard(first.back());

  first.push_back(gradient_suite());
  print(2, "gradient suite", first.back());
  hard(first.back());

  first.push_back(brute_force());
  print(3, "brute-force equivalence", first.back());
  hard(first.back());

  bool total_ok = false;
  std::string total_detail;
  first.push_back(parameter_accounting(total_ok, total_detail));
  print(4, "parameter accounting", first.back());
  hard(first.back());
  Outcome total{total_ok, false, total_detail, {}};
  print(4, "parameter total", total, true);

  first.push_back(flops_accounting());
  print(5, "flop accounting", first.back(), true);

  std::vector<TrainedVariant> trained;
  first.push_back(desk_training(trained));
  print(6, "desk-scale training", first.back());
  hard(first.back());

  first.push_back(metric_checks());
  print(7, "metric closed forms", first.back());
  hard(first.back());

  const Outcome corpus = corpus_check();
  print(8, "corpus baseline", corpus);
  hard(corpus);

  // Criteria 1-5 and 7 are re-run in full. Training is deterministic per
  // (seed, step), so each variant's first steps are re-run and must
  // reproduce the logged prefix byte for byte.
  constexpr std::size_t kReplaySteps = 40;
  const auto t0 = Clock::now();
  std::vector<Outcome> second;
  second.push_back(reduction_oracle());
  second.push_back(gradient_suite());
  second.push_back(brute_force());
  bool dummy = false;
  std::string dummy_detail;
  second.push_back(parameter_accounting(dummy, dummy_detail));
  second.push_back(flops_accounting());
  second.push_back(metric_checks());
  std::vector<Outcome> first_cmp(first);
  first_cmp.erase(first_cmp.begin() + 5);
  // Timing is not part of the logs, so only numeric traces are compared.
  bool same = joined(first_cmp) == joined(second);

  const fs::path root = fs::temp_directory_path() / "d3d_acceptance_replay";
  fs::remove_all(root);
  synth_dataset(desk_config(BlockKind::kD3D, 7, root, kDesk), root);
  const auto train_set = load_split(root, "train", 4), test_set = load_split(root, "test", 4);
  const struct {
    BlockKind block;
    std::size_t frames;
  } variants[] = {{BlockKind::kD3D, 7}, {BlockKind::kC3D, 7}, {BlockKind::kD3D, 3}};
  std::size_t replayed = 0;
  for (std::size_t i = 0; i < trained.size() && i < 3; ++i) {
    const auto v = run_variant(trained[i].name, desk_config(variants[i].block, variants[i].frames, root, kDesk),
                               train_set, test_set, kReplaySteps);
    same = same && trained[i].log.compare(0, v.log.size(), v.log) == 0 && !v.log.empty();
    ++replayed;
  }
  fs::remove_all(root);
  Outcome det;
  det.pass = same && replayed == 3;
  det.detail = fmt("criteria 1-5, 7 re-run in full; %zu training logs replayed for %zu steps; %s; %.0fs", replayed,
                   kReplaySteps, same ? "bitwise identical" : "MISMATCH", seconds_since(t0));
  print(9, "determinism", det);
  hard(det);

  return hard_ok ? 0 : 1;
}
