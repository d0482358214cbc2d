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

// d3d: dataset synthesis, training, evaluation, inference and self-checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "d3d/pipeline.hpp"
#include "d3d/simd.hpp"
#include "d3d/verify.hpp"

namespace fs = std::filesystem;
using namespace d3d;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> frames;
  std::optional<std::string> block;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  std::optional<std::string> data;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (f.config) {
    std::ifstream is(*f.config);
    if (!is) throw std::runtime_error("cannot open config " + *f.config);
    std::stringstream ss;
    ss << is.rdbuf();
    cfg.merge_json(ss.str());
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.frames) cfg.net.frames = *f.frames;
  if (f.block) cfg.net.block = parse_block(*f.block);
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.lr) cfg.lr = *f.lr;
  if (f.out) cfg.out = *f.out;
  if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
  if (f.data) cfg.data = *f.data;
  cfg.net.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text << "\n";
}

fs::path require_data(const RunConfig& cfg) {
  if (cfg.data.empty()) throw std::runtime_error("no dataset given (--data or \"data\" in the config)");
  if (!fs::exists(cfg.data / "manifest.json")) {
    throw std::runtime_error("missing dataset: " + (cfg.data / "manifest.json").string());
  }
  return cfg.data;
}

Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (!cfg.checkpoint) throw std::runtime_error("--checkpoint is required");
  return Checkpoint::load(*cfg.checkpoint);
}

int cmd_synth(const RunConfig& cfg) {
  const auto m = synth_dataset(cfg, cfg.out);
  std::printf("wrote %zu sequences (%zu test) to %s\n", m.sequences.size(), cfg.test_sequences,
              cfg.out.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto train_set = load_split(require_data(cfg), "train", cfg.net.scale);
  fs::create_directories(cfg.out);
  write_text(cfg.out / "config.json", cfg.to_json());
  Checkpoint state = cfg.checkpoint ? Checkpoint::load(*cfg.checkpoint) : initial_state(cfg);
  std::ofstream log(cfg.out / "train.log", std::ios::app);
  if (!log) throw std::runtime_error("cannot open " + (cfg.out / "train.log").string());
  const auto result = train(cfg, train_set, std::move(state), &log, [&](const Checkpoint& c) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.bin", c.epoch);
    c.save(cfg.out / name);
    c.save(cfg.out / "checkpoint.bin");
    std::printf("epoch %zu done\n", c.epoch);
  });
  if (!result.losses.empty()) std::printf("final loss %.6g\n", result.losses.back());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const auto ck = require_checkpoint(cfg);
  const auto test = load_split(require_data(cfg), "test", ck.model.config.scale);
  const auto model = evaluate_model(ck.model, test);
  const auto bicubic = evaluate_bicubic(test, ck.model.config.scale);
  fs::create_directories(cfg.out);
  write_text(cfg.out / "report.json", model.to_json());
  write_text(cfg.out / "report_bicubic.json", bicubic.to_json());
  std::printf("%-16s %8s %8s\n", "method", "psnr", "ssim");
  for (const auto* r : {&bicubic, &model}) std::printf("%-16s %8.3f %8.4f\n", r->method.c_str(), r->mean_psnr, r->mean_ssim);
  return 0;
}

int cmd_sr(const RunConfig& cfg, const std::string& input) {
  const auto ck = require_checkpoint(cfg);
  const auto frames = load_sequence(input);
  const auto out = super_resolve_color(ck.model, frames);
  fs::create_directories(cfg.out);
  for (std::size_t i = 0; i < out.size(); ++i) save_frame(out[i], frame_path(cfg.out, i));
  std::printf("wrote %zu frames to %s\n", out.size(), cfg.out.string().c_str());
  return 0;
}

int cmd_gradcheck(std::size_t instances) {
  constexpr double kTol = 1e-5;
  bool ok = true;
  std::printf("%-14s %-14s %9s %12s\n", "op", "wrt", "instances", "max_rel_err");
  for (const auto& r : gradcheck_suite(instances)) {
    const bool pass = r.max_error < kTol;
    ok = ok && pass;
    std::printf("%-14s %-14s %9zu %12.3e %s\n", r.op.c_str(), r.wrt.c_str(), r.instances, r.max_error,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_bench(const RunConfig& cfg, std::size_t lr_h, std::size_t lr_w, std::size_t runs) {
  NetworkConfig other = cfg.net;
  other.block = cfg.net.block == BlockKind::kD3D ? BlockKind::kC3D : BlockKind::kD3D;
  std::printf("isa            %s\n", std::string(simd::isa_name(simd::active_isa())).c_str());
  std::printf("block          %s\n", block_name(cfg.net.block).c_str());
  std::printf("params         %zu\n", count_params(cfg.net));
  std::printf("params(%s)    %zu\n", block_name(other.block).c_str(), count_params(other));
  std::printf("flops@1280x720 %.2fG\n", static_cast<double>(count_flops(cfg.net, 1280, 720)) / 1e9);
  const auto model = build<float>(cfg.net, cfg.seed);
  Tensor<float> lr({1, cfg.net.frames, lr_h, lr_w});
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : lr.span()) v = u(rng);
  infer(model, lr);  // warm-up
  double total = 0.0;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    infer(model, lr);
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  std::printf("forward %zux%zu  %.4f s (mean of %zu)\n", lr_h, lr_w, total / static_cast<double>(runs), runs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable 3-D convolution video super-resolution"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run config; flags override its values");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--frames", f.frames, "input frames per window")->check(CLI::IsMember({3, 5, 7}));
  app.add_option("--block", f.block, "d3d or c3d")->check(CLI::IsMember({"d3d", "c3d"}));
  app.add_option("--epochs", f.epochs, "training epochs");
  app.add_option("--lr", f.lr, "base learning rate");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--checkpoint", f.checkpoint, "checkpoint to resume or evaluate");
  app.add_option("--data", f.data, "dataset root holding manifest.json");

  auto* synth = app.add_subcommand("synth", "write a synthetic video dataset to --out");
  auto* trn = app.add_subcommand("train", "train on --data, writing checkpoints and train.log to --out");
  auto* eval = app.add_subcommand("eval", "score --checkpoint and bicubic on the test split of --data");
  auto* sr = app.add_subcommand("sr", "super-resolve the frames in --input into --out");
  std::string input;
  sr->add_option("--input", input, "directory of frame_XXXX.png")->required();
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every layer in f64");
  std::size_t instances = 5;
  grad->add_option("--instances", instances, "random instances per op");
  auto* bench = app.add_subcommand("bench", "parameter and FLOP counts plus forward timing");
  std::size_t bh = 64, bw = 64, runs = 20;
  bench->add_option("--height", bh, "LR height for timing");
  bench->add_option("--width", bw, "LR width for timing");
  bench->add_option("--runs", runs, "timed forward passes")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    const RunConfig cfg = resolve(f);
    if (*synth) return cmd_synth(cfg);
    if (*trn) return cmd_train(cfg);
    if (*eval) return cmd_eval(cfg);
    if (*sr) return cmd_sr(cfg, input);
    if (*grad) return cmd_gradcheck(instances);
    if (*bench) return cmd_bench(cfg, bh, bw, runs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "d3d: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
