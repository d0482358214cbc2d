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

#include <cmath>
#include <random>

#include "d3d/autograd.hpp"
#include "d3d/deform_conv.hpp"
#include "support/oracles.hpp"

using namespace d3d;
using d3d::testing::offsets_away_from_kinks;
using d3d::testing::random_tensor;

namespace ag = d3d::ag;

TEST_CASE("backward of simple reductions") {
  ag::Graph<double> g;
  auto xv = random_tensor<double>({3, 4}, 1);
  auto x = g.parameter("x", xv);
  auto grads = g.backward(ag::sum(g, x));
  CHECK(grads.at("x") == full<double>({3, 4}, 1.0));

  ag::Graph<double> h;
  auto y = h.parameter("x", xv);
  auto loss = ag::scalar_mul(h, ag::sum(h, ag::mul(h, y, y)), 0.5);
  auto gy = h.backward(loss).at("x");
  CHECK(testing::max_rel_diff(gy, xv) < 1e-15);
}

TEST_CASE("backward rejects non-scalar losses and zero-fills unreachable parameters") {
  ag::Graph<float> g;
  auto a = g.parameter("a", full<float>({2}, 1.0f));
  g.parameter("unused", full<float>({3}, 1.0f));
  CHECK_THROWS_AS(g.backward(ag::relu(g, a)), ShapeError);
  auto grads = g.backward(ag::sum(g, a));
  CHECK(grads.at("unused") == zeros<float>({3}));
  CHECK_THROWS(g.parameter("a", full<float>({1}, 0.0f)));
}

TEST_CASE("backward is deterministic and linear") {
  ag::Graph<double> g;
  auto x = g.parameter("x", random_tensor<double>({1, 2, 3, 4}, 2));
  auto w = g.parameter("w", random_tensor<double>({2, 1, 3, 3, 3}, 3));
  auto b = g.parameter("b", random_tensor<double>({2}, 4));
  auto y = ag::relu(g, ag::conv3d(g, x, w, b));
  auto target = g.constant(random_tensor<double>({2, 2, 3, 4}, 5));
  auto l1 = ag::mse_loss(g, y, target);
  auto l2 = ag::sum(g, ag::mul(g, y, y));
  auto both = ag::add(g, l1, l2);

  auto first = g.backward(both);
  auto second = g.backward(both);
  CHECK(first == second);

  auto g1 = g.backward(l1), g2 = g.backward(l2);
  for (const auto& [name, grad] : first) {
    CHECK(testing::max_rel_diff(grad, d3d::add(g1.at(name), g2.at(name))) < 1e-12);
  }
}

TEST_CASE("mse loss") {
  ag::Graph<double> g;
  auto a = random_tensor<double>({1, 5, 6}, 6);
  CHECK(g.value(ag::mse_loss(g, g.constant(a), g.constant(a)))[0] == 0.0);
  auto shifted = d3d::add(a, full<double>(a.shape(), 0.25));
  CHECK(g.value(ag::mse_loss(g, g.constant(shifted), g.constant(a)))[0] ==
        doctest::Approx(0.0625).epsilon(1e-12));
  auto b = random_tensor<double>({1, 5, 6}, 7);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(g.value(ag::mse_loss(g, g.constant(a), g.constant(b)))[0] ==
        doctest::Approx(acc / 30).epsilon(1e-12));
  CHECK_THROWS_AS(ag::mse_loss(g, g.constant(a), g.constant(zeros<double>({1, 5, 5}))), ShapeError);
}

TEST_CASE("adam") {
  SUBCASE("single step moves by about lr") {
    ag::ParameterMap<double> p{{"w", full<double>({3}, 0.5)}};
    ag::ParameterMap<double> grad{{"w", full<double>({3}, 1.0)}};
    ag::AdamState<double> s;
    s.base_lr = 0.001;
    ag::adam_step(p, grad, s, 0);
    CHECK(p.at("w")[0] - 0.5 == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(s.step == 1);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto w = random_tensor<float>({4, 4}, 8);
    ag::ParameterMap<float> p{{"w", w}};
    ag::ParameterMap<float> grad{{"w", zeros<float>({4, 4})}};
    ag::AdamState<float> s;
    for (int i = 0; i < 3; ++i) ag::adam_step(p, grad, s, 0);
    CHECK(p.at("w") == w);
  }
  SUBCASE("per-parameter learning-rate scale") {
    ag::ParameterMap<double> p{{"a", full<double>({2}, 0.5)}, {"b", full<double>({2}, 0.5)}};
    ag::ParameterMap<double> grad{{"a", full<double>({2}, 1.0)}, {"b", full<double>({2}, 1.0)}};
    ag::AdamState<double> s;
    s.base_lr = 0.001;
    s.lr_scale["b"] = 0.1;
    ag::adam_step(p, grad, s, 0);
    CHECK(p.at("a")[0] - 0.5 == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(p.at("b")[0] - 0.5 == doctest::Approx(-0.0001).epsilon(1e-6));
  }
  SUBCASE("halving schedule") {
    ag::AdamState<float> s;
    CHECK(s.lr_at(0) == 4e-4);
    CHECK(s.lr_at(5) == 4e-4);
    CHECK(s.lr_at(6) == 2e-4);
    CHECK(s.lr_at(12) == 1e-4);
    CHECK(s.lr_at(35) == doctest::Approx(4e-4 / 32));
  }
  SUBCASE("non-finite gradient names the parameter") {
    ag::ParameterMap<float> p{{"conv.weight", zeros<float>({2})}};
    ag::ParameterMap<float> grad{{"conv.weight", TensorF({2}, {0.0f, NAN})}};
    ag::AdamState<float> s;
    CHECK_THROWS_WITH(ag::adam_step(p, grad, s, 0),
                      doctest::Contains("conv.weight"));
    CHECK(s.step == 0);
  }
}

TEST_CASE("grad_check") {
  CHECK(ag::grad_check([](ag::Graph<double>& g, const std::vector<ag::Var>& v) { return ag::sum(g, v[0]); },
                       {random_tensor<double>({3, 5}, 9)}) < 1e-10);

  SUBCASE("conv3d wrt weights on 1x2x3x5x5") {
    auto x = random_tensor<double>({1, 2, 3, 5, 5}, 10);
    auto probe = random_tensor<double>({1, 2, 3, 5, 5}, 11);
    auto f = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
      return ag::sum(g, ag::mul(g, ag::conv3d(g, g.constant(x), v[0]), g.constant(probe)));
    };
    CHECK(ag::grad_check(f, {random_tensor<double>({2, 2, 3, 3, 3}, 12)}) < 1e-6);
  }
}

TEST_CASE("every differentiable op passes grad_check") {
  using Fn = ag::ScalarFn;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto probe = [seed](const Shape& s) { return random_tensor<double>(s, 1000 + seed); };
    auto dot = [](ag::Graph<double>& g, ag::Var y, const TensorD& p) {
      return ag::sum(g, ag::mul(g, y, g.constant(p)));
    };
    const auto p3 = probe({2, 3, 4, 4});
    const auto p2 = probe({3, 5, 4});
    const Fn conv3 = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
      return dot(g, ag::conv3d(g, v[0], v[1], v[2]), p3);
    };
    CHECK(ag::grad_check(conv3, {random_tensor<double>({2, 3, 4, 4}, seed),
                                 random_tensor<double>({2, 2, 3, 3, 3}, seed + 10),
                                 random_tensor<double>({2}, seed + 20)}) < 1e-5);
    const Fn conv2 = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
      return dot(g, ag::relu(g, ag::conv2d(g, v[0], v[1], v[2])), p2);
    };
    CHECK(ag::grad_check(conv2, {random_tensor<double>({2, 5, 4}, seed),
                                 random_tensor<double>({3, 2, 3, 3}, seed + 10),
                                 random_tensor<double>({3}, seed + 20)}) < 1e-5);
    const Fn deform = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
      return dot(g, ag::deform_conv3d(g, v[0], v[1], v[2], v[3]), p3);
    };
    CHECK(ag::grad_check(deform, {random_tensor<double>({2, 3, 4, 4}, seed),
                                  offsets_away_from_kinks({kOffsetChannels, 3, 4, 4}, seed + 30, 1),
                                  random_tensor<double>({2, 2, 3, 3, 3}, seed + 10),
                                  random_tensor<double>({2}, seed + 20)}) < 1e-5);
    const Fn fold = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
      auto f = ag::temporal_fold(g, ag::reshape(g, v[0], {1, 2, 3, 4, 4}));
      auto s = ag::pixel_shuffle(g, ag::slice(g, f, 1, 5, 1), 2);
      return ag::mse_loss(g, s, g.constant(probe({1, 1, 8, 8})));
    };
    CHECK(ag::grad_check(fold, {random_tensor<double>({2, 3, 4, 4}, seed)}) < 1e-5);
  }
}

TEST_CASE("full d3d layer gradient reaches the offset generator") {
  // Small generator weights keep offsets off integer crossings with high
  // probability; the check is repeated over seeds.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<double>({1, 3, 4, 4}, 40 + seed);
    auto probe = random_tensor<double>({2, 3, 4, 4}, 50 + seed);
    auto f = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
      auto y = ag::d3d(g, g.constant(x), v[0], v[1], v[2], v[3]);
      return ag::sum(g, ag::mul(g, y, g.constant(probe)));
    };
    auto gen_b = offsets_away_from_kinks({kOffsetChannels}, 60 + seed, 1);
    CHECK(ag::grad_check(f, {random_tensor<double>({2, 1, 3, 3, 3}, 70 + seed),
                             random_tensor<double>({2}, 80 + seed),
                             random_tensor<double>({kOffsetChannels, 1, 3, 3, 3}, 90 + seed, -0.005, 0.005),
                             gen_b}) < 1e-5);
  }
}
