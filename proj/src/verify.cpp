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

#include "d3d/verify.hpp"

#include <algorithm>
#include <random>

#include "d3d/autograd.hpp"
#include "d3d/deform_conv.hpp"

namespace d3d {

namespace {

using TensorD = Tensor<double>;

TensorD uniform(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  TensorD t(shape);
  for (auto& v : t.span()) v = d(rng);
  return t;
}

ag::Var dot(ag::Graph<double>& g, ag::Var y, const TensorD& probe) {
  return ag::sum(g, ag::mul(g, y, g.constant(probe)));
}

// Checks f with respect to inputs[k] only; the others enter as constants.
double check_one(const std::function<ag::Var(ag::Graph<double>&, const std::vector<ag::Var>&)>& f,
                 const std::vector<TensorD>& inputs, std::size_t k) {
  const ag::ScalarFn fn = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
    std::vector<ag::Var> all;
    for (std::size_t i = 0; i < inputs.size(); ++i) all.push_back(i == k ? v[0] : g.constant(inputs[i]));
    return f(g, all);
  };
  return ag::grad_check(fn, {inputs[k]});
}

}  // namespace

std::vector<double> fractional_offsets(std::size_t n, std::uint64_t seed, int max_int) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ip(-max_int, max_int);
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  std::vector<double> out(n);
  for (auto& v : out) v = ip(rng) + frac(rng);
  return out;
}

std::vector<GradCheckRow> gradcheck_suite(std::size_t instances, std::uint64_t seed) {
  std::vector<GradCheckRow> rows;
  auto record = [&rows, instances](const std::string& op, const std::string& wrt, double err) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.op == op && r.wrt == wrt; });
    if (it == rows.end()) {
      rows.push_back({op, wrt, instances, err});
    } else {
      it->max_error = std::max(it->max_error, err);
    }
  };
  for (std::size_t i = 0; i < instances; ++i) {
    const std::uint64_t s = seed + 100 * i;
    {
      const auto probe = uniform({2, 3, 4, 4}, s + 1);
      const std::vector<TensorD> in{uniform({2, 3, 4, 4}, s + 2), uniform({2, 2, 3, 3, 3}, s + 3),
                                    uniform({2}, s + 4)};
      auto f = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
        return dot(g, ag::conv3d(g, v[0], v[1], v[2]), probe);
      };
      const char* names[] = {"input", "weight", "bias"};
      for (std::size_t k = 0; k < 3; ++k) record("conv3d", names[k], check_one(f, in, k));
    }
    {
      const auto probe = uniform({3, 5, 4}, s + 5);
      const std::vector<TensorD> in{uniform({2, 5, 4}, s + 6), uniform({3, 2, 3, 3}, s + 7), uniform({3}, s + 8)};
      auto f = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
        return dot(g, ag::conv2d(g, v[0], v[1], v[2]), probe);
      };
      const char* names[] = {"input", "weight", "bias"};
      for (std::size_t k = 0; k < 3; ++k) record("conv2d", names[k], check_one(f, in, k));
    }
    {
      const auto probe = uniform({2, 3, 4, 4}, s + 9);
      const Shape off_shape{kOffsetChannels, 3, 4, 4};
      TensorD off(off_shape, fractional_offsets(shape_numel(off_shape), s + 10));
      const std::vector<TensorD> in{uniform({2, 3, 4, 4}, s + 11), off, uniform({2, 2, 3, 3, 3}, s + 12),
                                    uniform({2}, s + 13)};
      auto f = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
        return dot(g, ag::deform_conv3d(g, v[0], v[1], v[2], v[3]), probe);
      };
      const char* names[] = {"input", "offsets", "weight", "bias"};
      for (std::size_t k = 0; k < 4; ++k) record("deform_conv3d", names[k], check_one(f, in, k));
    }
    {
      // Tiny generator weights plus fractional biases keep every sample
      // away from integer crossings.
      const auto probe = uniform({2, 3, 4, 4}, s + 14);
      TensorD gen_b({kOffsetChannels}, fractional_offsets(kOffsetChannels, s + 15));
      const std::vector<TensorD> in{uniform({1, 3, 4, 4}, s + 16), uniform({2, 1, 3, 3, 3}, s + 17),
                                    uniform({2}, s + 18),
                                    uniform({kOffsetChannels, 1, 3, 3, 3}, s + 19, -0.005, 0.005), gen_b};
      auto f = [&](ag::Graph<double>& g, const std::vector<ag::Var>& v) {
        return dot(g, ag::d3d(g, v[0], v[1], v[2], v[3], v[4]), probe);
      };
      const char* names[] = {"input", "weight", "bias", "offset.weight", "offset.bias"};
      for (std::size_t k = 0; k < 5; ++k) record("d3d", names[k], check_one(f, in, k));
    }
  }
  return rows;
}

}  // namespace d3d
