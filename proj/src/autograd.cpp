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

#include "d3d/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "d3d/conv.hpp"
#include "d3d/deform_conv.hpp"
#include "d3d/simd.hpp"

namespace d3d::ag {

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::parameter(const std::string& name, Tensor<T> value) {
  if (name.empty()) throw std::invalid_argument("parameter needs a name");
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  nodes_.push_back(Node{std::move(value), {}, true, name});
  params_[name] = nodes_.size() - 1;
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::record(Tensor<T> value, const std::vector<Var>& inputs, Backward backward) {
  bool rg = false;
  for (Var v : inputs) rg = rg || requires_grad(v);
  nodes_.push_back(Node{std::move(value), rg ? std::move(backward) : Backward{}, rg, {}});
  return Var{nodes_.size() - 1};
}

template <typename T>
void Graph<T>::accumulate(Var v, Tensor<T> g) {
  if (!requires_grad(v)) return;
  require_same_shape(nodes_[v.id].value.shape(), g.shape(), "gradient");
  auto& slot = grads_[v.id];
  if (slot.empty()) {
    slot = std::move(g);
  } else {
    add_inplace(slot, g);
  }
}

template <typename T>
ParameterMap<T> Graph<T>::backward(Var loss) {
  if (value(loss).numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(value(loss).shape()));
  }
  grads_.assign(nodes_.size(), Tensor<T>{});
  if (requires_grad(loss)) grads_[loss.id] = full<T>(value(loss).shape(), T(1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads_[i].empty() || !n.backward) continue;
    Tensor<T> gout = std::move(grads_[i]);
    grads_[i] = Tensor<T>{};
    n.backward(*this, gout);
  }
  ParameterMap<T> out;
  for (const auto& [name, id] : params_) {
    out[name] = grads_[id].empty() ? zeros_like(nodes_[id].value) : std::move(grads_[id]);
  }
  grads_.clear();
  return out;
}

namespace {

template <typename T>
ConvWeights<T> weights_of(const Graph<T>& g, Var w, Var b) {
  return ConvWeights<T>{g.value(w), b.valid() ? g.value(b) : Tensor<T>{}};
}

}  // namespace

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  return g.record(d3d::add(g.value(a), g.value(b)), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(a, go);
    gr.accumulate(b, go);
  });
}

template <typename T>
Var sub(Graph<T>& g, Var a, Var b) {
  return g.record(d3d::sub(g.value(a), g.value(b)), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(b)) gr.accumulate(b, d3d::scalar_mul(go, T(-1)));
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  return g.record(d3d::mul(g.value(a), g.value(b)), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& go) {
    if (gr.requires_grad(a)) gr.accumulate(a, d3d::mul(go, gr.value(b)));
    if (gr.requires_grad(b)) gr.accumulate(b, d3d::mul(go, gr.value(a)));
  });
}

template <typename T>
Var scalar_mul(Graph<T>& g, Var a, T s) {
  return g.record(d3d::scalar_mul(g.value(a), s), {a}, [a, s](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(a, d3d::scalar_mul(go, s));
  });
}

template <typename T>
Var relu(Graph<T>& g, Var a) {
  return g.record(d3d::relu(g.value(a)), {a}, [a](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& x = gr.value(a);
    auto dx = zeros_like(x);
    simd::active<T>().relu_backward(x.numel(), x.data(), go.data(), dx.data());
    gr.accumulate(a, std::move(dx));
  });
}

template <typename T>
Var sum(Graph<T>& g, Var a) {
  Tensor<T> s({1});
  s[0] = static_cast<T>(d3d::sum(g.value(a)));
  return g.record(std::move(s), {a}, [a](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(a, full<T>(gr.value(a).shape(), go[0]));
  });
}

template <typename T>
Var mse_loss(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& x = g.value(a);
  const Tensor<T>& y = g.value(b);
  require_same_shape(x.shape(), y.shape(), "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / static_cast<double>(x.numel()));
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& x = gr.value(a);
    const Tensor<T>& y = gr.value(b);
    const T scale = go[0] * T(2) / static_cast<T>(x.numel());
    auto d = d3d::scalar_mul(d3d::sub(x, y), scale);
    if (gr.requires_grad(b)) gr.accumulate(b, d3d::scalar_mul(d, T(-1)));
    gr.accumulate(a, std::move(d));
  });
}

template <typename T>
Var reshape(Graph<T>& g, Var a, const Shape& shape) {
  return g.record(g.value(a).reshaped(shape), {a}, [a](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(a, go.reshaped(gr.value(a).shape()));
  });
}

template <typename T>
Var slice(Graph<T>& g, Var a, std::size_t begin, std::size_t end, std::size_t axis) {
  return g.record(slice_channels(g.value(a), begin, end, axis), {a},
                  [a, begin, end, axis](Graph<T>& gr, const Tensor<T>& go) {
                    const Shape& s = gr.value(a).shape();
                    std::size_t outer = 1, inner = 1;
                    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
                    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
                    const std::size_t len = (end - begin) * inner;
                    auto dx = zeros<T>(s);
                    for (std::size_t o = 0; o < outer; ++o) {
                      std::copy_n(go.data() + o * len, len,
                                  dx.data() + (o * s[axis] + begin) * inner);
                    }
                    gr.accumulate(a, std::move(dx));
                  });
}

template <typename T>
Var temporal_fold(Graph<T>& g, Var a) {
  return g.record(d3d::temporal_fold(g.value(a)), {a}, [a](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& x = gr.value(a);
    gr.accumulate(a, temporal_unfold(go, x.extent(x.rank() - 3)));
  });
}

template <typename T>
Var pixel_shuffle(Graph<T>& g, Var a, std::size_t r) {
  return g.record(d3d::pixel_shuffle(g.value(a), r), {a}, [a, r](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(a, pixel_unshuffle(go, r));
  });
}

template <typename T>
Var conv3d(Graph<T>& g, Var x, Var weight, Var bias) {
  return g.record(conv3d_forward(g.value(x), weights_of(g, weight, bias)), {x, weight, bias},
                  [x, weight, bias](Graph<T>& gr, const Tensor<T>& go) {
                    auto r = conv3d_backward(gr.value(x), weights_of(gr, weight, bias), go,
                                             gr.requires_grad(x));
                    if (!r.dx.empty()) gr.accumulate(x, std::move(r.dx));
                    gr.accumulate(weight, std::move(r.dw));
                    if (bias.valid()) gr.accumulate(bias, std::move(r.dbias));
                  });
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias) {
  return g.record(conv2d_forward(g.value(x), weights_of(g, weight, bias)), {x, weight, bias},
                  [x, weight, bias](Graph<T>& gr, const Tensor<T>& go) {
                    auto r = conv2d_backward(gr.value(x), weights_of(gr, weight, bias), go,
                                             gr.requires_grad(x));
                    if (!r.dx.empty()) gr.accumulate(x, std::move(r.dx));
                    gr.accumulate(weight, std::move(r.dw));
                    if (bias.valid()) gr.accumulate(bias, std::move(r.dbias));
                  });
}

template <typename T>
Var deform_conv3d(Graph<T>& g, Var x, Var offsets, Var weight, Var bias) {
  return g.record(
      deform_conv3d_forward(g.value(x), g.value(offsets), weights_of(g, weight, bias)),
      {x, offsets, weight, bias}, [x, offsets, weight, bias](Graph<T>& gr, const Tensor<T>& go) {
        auto r = deform_conv3d_backward(gr.value(x), gr.value(offsets),
                                        weights_of(gr, weight, bias), go, gr.requires_grad(x));
        if (!r.dx.empty()) gr.accumulate(x, std::move(r.dx));
        gr.accumulate(offsets, std::move(r.doffsets));
        gr.accumulate(weight, std::move(r.dw));
        if (bias.valid()) gr.accumulate(bias, std::move(r.dbias));
      });
}

template <typename T>
Var d3d(Graph<T>& g, Var x, Var weight, Var bias, Var gen_weight, Var gen_bias) {
  if (g.value(gen_weight).extent(0) != kOffsetChannels) {
    throw ShapeError("d3d: offset generator must have " + std::to_string(kOffsetChannels) +
                     " output channels");
  }
  Var offsets = conv3d(g, x, gen_weight, gen_bias);
  return deform_conv3d(g, x, offsets, weight, bias);
}

template <typename T>
double AdamState<T>::lr_at(std::size_t epoch) const {
  if (halve_every == 0) return base_lr;
  return base_lr * std::ldexp(1.0, -static_cast<int>(epoch / halve_every));
}

template <typename T>
void adam_step(ParameterMap<T>& params, const ParameterMap<T>& grads, AdamState<T>& state,
               std::size_t epoch) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::runtime_error("adam: no gradient for '" + name + "'");
    if (it->second.shape() != p.shape()) {
      throw std::runtime_error("adam: gradient shape mismatch for '" + name + "'");
    }
    for (T v : it->second.span()) {
      if (!std::isfinite(v)) throw std::runtime_error("adam: non-finite gradient in '" + name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T bc1 = static_cast<T>(1.0 - std::pow(state.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(state.beta2, t));
  const double lr = state.lr_at(epoch);
  const auto& k = simd::active<T>();
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m = zeros_like(p);
    if (v.empty()) v = zeros_like(p);
    auto sc = state.lr_scale.find(name);
    const T rate = static_cast<T>(sc == state.lr_scale.end() ? lr : lr * sc->second);
    k.adam(p.numel(), p.data(), grads.at(name).data(), m.data(), v.data(), rate,
           static_cast<T>(state.beta1), static_cast<T>(state.beta2), static_cast<T>(state.eps), bc1,
           bc2);
  }
}

double grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double eps) {
  Graph<double> g;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(g.parameter("input" + std::to_string(i), inputs[i]));
  }
  const auto grads = g.backward(f(g, leaves));

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Graph<double> h;
    std::vector<Var> vs;
    for (const auto& x : xs) vs.push_back(h.constant(x));
    return h.value(f(h, vs))[0];
  };
  std::vector<Tensor<double>> xs = inputs;
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& analytic = grads.at("input" + std::to_string(i));
    for (std::size_t j = 0; j < xs[i].numel(); ++j) {
      const double saved = xs[i][j];
      xs[i][j] = saved + eps;
      const double up = eval(xs);
      xs[i][j] = saved - eps;
      const double down = eval(xs);
      xs[i][j] = saved;
      const double fd = (up - down) / (2 * eps);
      const double a = analytic[j];
      worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8}));
    }
  }
  return worst;
}

#define D3D_INSTANTIATE(T)                                                               \
  template class Graph<T>;                                                              \
  template struct AdamState<T>;                                                         \
  template Var add<T>(Graph<T>&, Var, Var);                                             \
  template Var sub<T>(Graph<T>&, Var, Var);                                             \
  template Var mul<T>(Graph<T>&, Var, Var);                                             \
  template Var scalar_mul<T>(Graph<T>&, Var, T);                                        \
  template Var relu<T>(Graph<T>&, Var);                                                 \
  template Var sum<T>(Graph<T>&, Var);                                                  \
  template Var mse_loss<T>(Graph<T>&, Var, Var);                                        \
  template Var reshape<T>(Graph<T>&, Var, const Shape&);                                \
  template Var slice<T>(Graph<T>&, Var, std::size_t, std::size_t, std::size_t);         \
  template Var temporal_fold<T>(Graph<T>&, Var);                                        \
  template Var pixel_shuffle<T>(Graph<T>&, Var, std::size_t);                           \
  template Var conv3d<T>(Graph<T>&, Var, Var, Var);                                     \
  template Var conv2d<T>(Graph<T>&, Var, Var, Var);                                     \
  template Var deform_conv3d<T>(Graph<T>&, Var, Var, Var, Var);                         \
  template Var d3d<T>(Graph<T>&, Var, Var, Var, Var, Var);                              \
  template void adam_step<T>(ParameterMap<T>&, const ParameterMap<T>&, AdamState<T>&, \
                             std::size_t);

D3D_INSTANTIATE(float)
D3D_INSTANTIATE(double)

}  // namespace d3d::ag
