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

#include <doctest.h>

#include <random>

#include "d3d/conv.hpp"
#include "d3d/simd.hpp"
#include "support/finite_diff.hpp"
#include "support/oracles.hpp"

using namespace d3d;
using d3d::testing::max_rel_diff;
using d3d::testing::naive_conv3d;
using d3d::testing::random_tensor;

namespace {

template <typename T>
ConvWeights<T> random_weights(std::size_t co, std::size_t ci, std::size_t k, std::uint64_t seed,
                              bool bias = true) {
  ConvWeights<T> p;
  p.weight = random_tensor<T>({co, ci, k, k, k}, seed);
  if (bias) p.bias = random_tensor<T>({co}, seed + 1);
  return p;
}

// Per-sample oracle for batched input.
template <typename T>
Tensor<T> naive_batched(const Tensor<T>& x, const ConvWeights<T>& p) {
  std::vector<Tensor<T>> outs;
  for (std::size_t n = 0; n < x.extent(0); ++n) {
    auto xn = slice_channels(x, n, n + 1, 0);
    const Shape& s = xn.shape();
    auto yn = naive_conv3d(xn.reshaped({s[1], s[2], s[3], s[4]}), p.weight, p.bias);
    const Shape& ys = yn.shape();
    outs.push_back(yn.reshaped({1, ys[0], ys[1], ys[2], ys[3]}));
  }
  return concat_channels<T>(outs, 0);
}

}  // namespace

TEST_CASE("identity kernel passes the input through") {
  ConvWeights<double> p;
  p.weight = zeros<double>({1, 1, 3, 3, 3});
  p.weight.at({0, 0, 1, 1, 1}) = 1.0;
  p.bias = zeros<double>({1});
  auto x = random_tensor<double>({1, 4, 5, 6}, 1);
  CHECK(conv3d_forward(x, p) == x);
}

TEST_CASE("all-ones kernel counts in-bounds taps") {
  ConvWeights<float> p;
  p.weight = full<float>({1, 1, 3, 3, 3}, 1.0f);
  auto y = conv3d_forward(full<float>({1, 3, 3, 3}, 1.0f), p);
  CHECK(y.at({0, 1, 1, 1}) == 27.0f);
  CHECK(y.at({0, 0, 0, 0}) == 8.0f);
  CHECK(y.at({0, 2, 2, 2}) == 8.0f);
  CHECK(y.at({0, 1, 0, 1}) == 18.0f);
}

TEST_CASE("conv3d matches the nested-loop oracle") {
  SUBCASE("batched 2x2x3x5x5") {
    auto x = random_tensor<float>({2, 2, 3, 5, 5}, 2);
    auto p = random_weights<float>(3, 2, 3, 3);
    CHECK(max_rel_diff(conv3d_forward(x, p), naive_batched(x, p)) < 1e-6);
  }
  SUBCASE("random small instances") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 12; ++trial) {
      const std::size_t ci = 1 + rng() % 3, co = 1 + rng() % 4;
      const std::size_t k = (rng() % 2) ? 3 : 1;
      Shape xs{ci, 1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 6};
      auto x = random_tensor<double>(xs, rng());
      auto p = random_weights<double>(co, ci, k, rng(), trial % 2 == 0);
      CHECK(max_rel_diff(conv3d_forward(x, p), naive_conv3d(x, p.weight, p.bias)) < 1e-12);
    }
  }
}

TEST_CASE("conv3d is linear and preserves extents") {
  auto x1 = random_tensor<float>({2, 4, 6, 5}, 3), x2 = random_tensor<float>({2, 4, 6, 5}, 4);
  auto p = random_weights<float>(3, 2, 3, 5, false);
  auto lhs = conv3d_forward(add(scalar_mul(x1, 1.5f), scalar_mul(x2, -0.5f)), p);
  auto rhs = add(scalar_mul(conv3d_forward(x1, p), 1.5f), scalar_mul(conv3d_forward(x2, p), -0.5f));
  CHECK(lhs.shape() == Shape{3, 4, 6, 5});
  CHECK(max_rel_diff(lhs, rhs) < 1e-5);
}

TEST_CASE("conv3d rejects bad shapes") {
  auto p = random_weights<float>(2, 3, 3, 1);
  CHECK_THROWS_AS(conv3d_forward(random_tensor<float>({2, 3, 4, 4}, 1), p), ShapeError);
  ConvWeights<float> even;
  even.weight = zeros<float>({1, 1, 2, 3, 3});
  CHECK_THROWS_AS(conv3d_forward(zeros<float>({1, 3, 4, 4}), even), ShapeError);
  auto x = random_tensor<float>({3, 2, 4, 4}, 2);
  CHECK_THROWS_AS(conv3d_backward(x, p, zeros<float>({2, 2, 4, 5})), ShapeError);
}

TEST_CASE("conv3d backward") {
  SUBCASE("zero upstream gradient") {
    auto x = random_tensor<double>({2, 3, 4, 4}, 5);
    auto p = random_weights<double>(3, 2, 3, 6);
    auto g = conv3d_backward(x, p, zeros<double>({3, 3, 4, 4}));
    CHECK(g.dx == zeros_like(x));
    CHECK(g.dw == zeros_like(p.weight));
    CHECK(g.dbias == zeros_like(p.bias));
  }
  SUBCASE("bias gradient counts elements") {
    auto x = random_tensor<float>({1, 3, 4, 4}, 6);
    auto p = random_weights<float>(2, 1, 3, 7);
    auto g = conv3d_backward(x, p, full<float>({2, 3, 4, 4}, 1.0f));
    CHECK(g.dbias[0] == 48.0f);
    CHECK(g.dbias[1] == 48.0f);
  }
  SUBCASE("finite differences on 1x1x3x4x4") {
    auto x = random_tensor<double>({1, 1, 3, 4, 4}, 8);
    auto p = random_weights<double>(2, 1, 3, 9);
    auto probe = random_tensor<double>({1, 2, 3, 4, 4}, 10);
    auto g = conv3d_backward(x, p, probe);
    CHECK(d3d::testing::fd_max_rel_error([&](const TensorD& th) { return conv3d_forward(th, p); },
                                         x, probe, g.dx) < 1e-6);
    CHECK(d3d::testing::fd_max_rel_error(
              [&](const TensorD& th) { return conv3d_forward(x, ConvWeights<double>{th, p.bias}); },
              p.weight, probe, g.dw) < 1e-6);
    CHECK(d3d::testing::fd_max_rel_error(
              [&](const TensorD& th) { return conv3d_forward(x, ConvWeights<double>{p.weight, th}); },
              p.bias, probe, g.dbias) < 1e-6);
  }
  SUBCASE("input gradient can be skipped") {
    auto x = random_tensor<float>({1, 2, 3, 3}, 11);
    auto p = random_weights<float>(2, 1, 3, 12);
    auto g = conv3d_backward(x, p, random_tensor<float>({2, 2, 3, 3}, 13), false);
    CHECK(g.dx.empty());
    CHECK(g.dw == conv3d_backward(x, p, random_tensor<float>({2, 2, 3, 3}, 13)).dw);
  }
}

TEST_CASE("conv2d") {
  ConvWeights<double> id;
  id.weight = zeros<double>({1, 1, 3, 3});
  id.weight.at({0, 0, 1, 1}) = 1.0;
  auto img = random_tensor<double>({1, 5, 7}, 14);
  CHECK(conv2d_forward(img, id) == img);

  ConvWeights<double> p{random_tensor<double>({3, 2, 3, 3}, 15), random_tensor<double>({3}, 16)};
  auto x = random_tensor<double>({2, 5, 4}, 17);
  auto y = conv2d_forward(x, p);
  auto oracle = naive_conv3d(x.reshaped({2, 1, 5, 4}), p.weight.reshaped({3, 2, 1, 3, 3}), p.bias);
  CHECK(max_rel_diff(y, oracle.reshaped({3, 5, 4})) < 1e-12);

  ConvWeights<double> pw{random_tensor<double>({4, 2, 1, 1}, 18), {}};
  auto yb = conv2d_forward(random_tensor<double>({3, 2, 5, 4}, 19), pw);
  CHECK(yb.shape() == Shape{3, 4, 5, 4});

  auto probe = random_tensor<double>({3, 5, 4}, 20);
  auto g = conv2d_backward(x, p, probe);
  CHECK(g.dx.shape() == x.shape());
  CHECK(d3d::testing::fd_max_rel_error([&](const TensorD& th) { return conv2d_forward(th, p); }, x,
                                       probe, g.dx) < 1e-6);
  CHECK(d3d::testing::fd_max_rel_error(
            [&](const TensorD& th) { return conv2d_forward(x, ConvWeights<double>{th, p.bias}); },
            p.weight, probe, g.dw) < 1e-6);
}

TEST_CASE("scalar and vector paths agree bitwise on conv") {
  if (!simd::isa_supported(simd::Isa::kAvx2)) return;
  const auto before = simd::active_isa();
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t ci = 1 + rng() % 4, co = 1 + rng() % 5;
    Shape xs{1 + rng() % 2, ci, 1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 6};
    auto x = random_tensor<double>(xs, rng());
    auto p = random_weights<double>(co, ci, 3, rng());
    Shape ys = xs;
    ys[1] = co;
    auto dy = random_tensor<double>(ys, rng());
    simd::set_active_isa(simd::Isa::kScalar);
    auto y0 = conv3d_forward(x, p);
    auto g0 = conv3d_backward(x, p, dy);
    simd::set_active_isa(simd::Isa::kAvx2);
    auto y1 = conv3d_forward(x, p);
    auto g1 = conv3d_backward(x, p, dy);
    CHECK(y0 == y1);
    CHECK(g0.dx == g1.dx);
    CHECK(g0.dw == g1.dw);
    CHECK(g0.dbias == g1.dbias);
  }
  simd::set_active_isa(before);
}
