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

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "d3d/tensor.hpp"

namespace d3d::testing {

/// Central differences of L(theta) = sum(probe * f(theta)) with respect to
/// every component of theta, compared against `analytic`. Returns the max of
/// |a - fd| / max(|a|, |fd|, 1e-8).
inline double fd_max_rel_error(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                               Tensor<double> theta, const Tensor<double>& probe,
                               const Tensor<double>& analytic, double eps = 1e-4) {
  auto loss = [&](const Tensor<double>& th) {
    const auto y = f(th);
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += probe[i] * y[i];
    return s;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double up = loss(theta);
    theta[i] = saved - eps;
    const double down = loss(theta);
    theta[i] = saved;
    const double fd = (up - down) / (2 * eps);
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8}));
  }
  return worst;
}

}  // namespace d3d::testing
