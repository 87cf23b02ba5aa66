// Copyright 2026 The LFFN Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "lffn/selftest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string_view>
#include <type_traits>

#include "lffn/kernels.h"
#include "lffn/reference_net.h"

namespace lffn {
namespace {

using Rng = std::mt19937_64;

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(shape);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

// Magnitudes in [0.1, 1] with random sign, so a step of 1e-2 never crosses
// the kink of prelu or |x|.
Tensor kink_free(Shape shape, Rng& rng) {
  Tensor t = random_tensor(shape, rng, 0.1f, 1.0f);
  std::bernoulli_distribution sign(0.5);
  for (float& v : t.data()) {
    if (sign(rng)) v = -v;
  }
  return t;
}

double project(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    s += static_cast<double>(out[i]) * r[i];
  }
  return s;
}

// Projected output plus the sign of every prelu input. A finite difference
// is only meaningful when the stencil stays on one side of every kink.
struct Sample {
  double loss = 0.0;
  std::vector<bool> pattern;
};

Sample sample(const Tape& t, Var out, const Tensor& r) {
  Sample s{project(t.value(out), r), {}};
  for (std::size_t id = 0; id < t.size(); ++id) {
    const Var v{static_cast<int>(id)};
    if (std::string_view(t.op_name(v)) != "prelu") continue;
    for (float x : t.value(Var{t.inputs(v)[0]}).data()) s.pattern.push_back(x >= 0.0f);
  }
  return s;
}

std::vector<std::size_t> pick_coords(std::size_t n, int max_coords, Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (max_coords <= 0 || n <= static_cast<std::size_t>(max_coords)) return all;
  std::vector<std::size_t> out;
  std::sample(all.begin(), all.end(), std::back_inserter(out), max_coords, rng);
  return out;
}

struct Probe {
  std::size_t input;
  double fd, g;
};

// Worst relative vector error over the inputs. Inputs whose gradient is far
// below the typical magnitude are measured against that magnitude, since
// their finite differences carry no signal above rounding.
CheckResult score(const std::string& name, const std::vector<Probe>& probes,
                  std::span<const std::string> labels, std::size_t probed,
                  std::size_t skipped, const GradCheckOptions& o) {
  CheckResult res{name, 0.0, o.tolerance, true, {}};
  double rms = 0.0;
  for (const Probe& p : probes) rms += p.g * p.g;
  rms = probes.empty() ? 0.0 : std::sqrt(rms / probes.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double diff2 = 0.0, fd2 = 0.0, g2 = 0.0;
    std::size_t n = 0;
    for (const Probe& p : probes) {
      if (p.input != i) continue;
      diff2 += (p.fd - p.g) * (p.fd - p.g);
      fd2 += p.fd * p.fd;
      g2 += p.g * p.g;
      ++n;
    }
    const double floor = 1e-3 * rms * std::sqrt(static_cast<double>(n));
    const double denom = std::max({std::sqrt(fd2), std::sqrt(g2), floor});
    const double err = denom < 1e-12 ? 0.0 : std::sqrt(diff2) / denom;
    if (err > res.error) {
      res.error = err;
      res.detail = "worst input: " + labels[i];
    }
  }
  if (skipped > 0) {
    res.detail += (res.detail.empty() ? "" : ", ") + std::to_string(skipped) +
                  "/" + std::to_string(probed) + " probes straddle a kink";
  }
  // Too few smooth probes would make the check meaningless.
  res.passed = res.error <= o.tolerance && skipped * 4 <= probed;
  return res;
}

std::size_t extent(const Tensor& t) { return t.numel(); }
std::size_t extent(const std::vector<double>& v) { return v.size(); }

// Central differences of `eval` over coordinates of `values`, shrinking the
// step while the stencil crosses a kink. Values hold float or double.
template <typename Values, typename Eval>
CheckResult compare(const std::string& name, std::span<Values* const> values,
                    std::span<const Tensor> grads,
                    std::span<const std::string> labels, Eval&& eval,
                    const GradCheckOptions& o) {
  Rng rng(o.seed * 7919 + 17);
  const std::vector<bool> base = eval().pattern;
  std::vector<Probe> probes;
  std::size_t probed = 0, skipped = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Values& v = *values[i];
    using T = std::remove_cvref_t<decltype(v[0])>;
    for (std::size_t idx : pick_coords(extent(v), o.max_coords, rng)) {
      ++probed;
      const T orig = v[idx];
      std::optional<double> fd;
      for (double step : {o.step, o.step / 2, o.step / 3}) {
        const T up = orig + static_cast<T>(step);
        const T down = orig - static_cast<T>(step);
        v[idx] = up;
        const Sample p = eval();
        v[idx] = down;
        const Sample m = eval();
        v[idx] = orig;
        if (p.pattern != base || m.pattern != base) continue;
        fd = (p.loss - m.loss) / (static_cast<double>(up) - down);
        break;
      }
      if (fd) {
        probes.push_back({i, *fd, grads[i][idx]});
      } else {
        ++skipped;
      }
    }
  }
  return score(name, probes, labels, probed, skipped, o);
}

}  // namespace

CheckResult gradient_check(const std::string& name, const GraphFn& graph,
                           std::vector<Tensor> inputs,
                           const GradCheckOptions& o) {
  Tensor r;
  const auto evaluate = [&]() {
    Tape t;
    std::vector<Var> vars;
    for (const Tensor& x : inputs) vars.push_back(t.constant(x));
    const Var out = graph(t, vars);
    if (r.numel() == 0) {
      Rng rng(o.seed);
      r = random_tensor(t.value(out).shape(), rng);
    }
    return sample(t, out, r);
  };
  evaluate();

  Tape tape;
  std::vector<Var> vars;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    labels.push_back("input" + std::to_string(i));
    vars.push_back(tape.leaf(inputs[i], labels.back()));
  }
  GradientMap g = tape.backward(weighted_sum(tape, graph(tape, vars), r));
  std::vector<Tensor> grads;
  std::vector<Tensor*> values;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    grads.push_back(g.at(labels[i]));
    values.push_back(&inputs[i]);
  }
  return compare<Tensor>(name, values, grads, labels,
                 evaluate, o);
}

CheckResult gradient_check_weights(
    const std::string& name, WeightStore store,
    const std::function<Var(ParamBinder&)>& graph, const GradCheckOptions& o) {
  Tensor r;
  const auto evaluate = [&]() {
    Tape t;
    ParamBinder binder(t, store, /*trainable=*/false);
    const Var out = graph(binder);
    if (r.numel() == 0) {
      Rng rng(o.seed);
      r = random_tensor(t.value(out).shape(), rng);
    }
    return sample(t, out, r);
  };
  evaluate();

  Tape tape;
  ParamBinder binder(tape, store, /*trainable=*/true);
  GradientMap g = tape.backward(weighted_sum(tape, graph(binder), r));
  std::vector<Tensor> grads;
  std::vector<Tensor*> values;
  std::vector<std::string> labels;
  for (auto& e : store.entries()) {
    auto it = g.find(e.name);
    if (it == g.end()) continue;
    grads.push_back(it->second);
    values.push_back(&e.value);
    labels.push_back(e.name);
  }
  return compare<Tensor>(name, values, grads, labels,
                 evaluate, o);
}

CheckResult shadow_gradient_check(const std::string& name, const Network& net,
                                  const Tensor& input,
                                  const GradCheckOptions& o) {
  reference::ShadowNetwork shadow(net.spec(), net.weights());
  const reference::Array x = reference::to_array(input);
  Tensor r;
  {
    Tape t;
    ParamBinder binder(t, net.weights(), /*trainable=*/false);
    Rng rng(o.seed);
    r = random_tensor(t.value(net.forward(binder, t.constant(input))).shape(), rng);
  }
  Tape tape;
  ParamBinder binder(tape, net.weights(), /*trainable=*/true);
  GradientMap g = tape.backward(
      weighted_sum(tape, net.forward(binder, tape.constant(input)), r));
  std::vector<Tensor> grads;
  std::vector<std::vector<double>*> values;
  std::vector<std::string> labels;
  for (const auto& e : net.weights().entries()) {
    grads.push_back(g.at(e.name));
    values.push_back(&shadow.param(e.name));
    labels.push_back(e.name);
  }
  const auto evaluate = [&]() {
    Sample s;
    const reference::Array y = shadow.forward(x, &s.pattern);
    for (std::size_t i = 0; i < y.v.size(); ++i) s.loss += y.v[i] * r[i];
    return s;
  };
  return compare<std::vector<double>>(name, values, grads, labels, evaluate, o);
}

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return m;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (float v : a.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

CheckResult value_check(const std::string& name, double error, double tol,
                        std::string detail = {}) {
  return {name, error, tol, error <= tol, std::move(detail)};
}

CheckResult conv_against_reference(const ConvSpec& spec, Rng& rng) {
  const Tensor x = random_tensor(Shape{2, spec.in_channels, 7, 6}, rng);
  const Tensor w = random_tensor(spec.weight_shape(), rng);
  const Tensor b = random_tensor(Shape{spec.out_channels}, rng);
  const Tensor y = conv2d_forward(x, w, &b, spec);
  const Tensor y_ref = reference::conv2d_forward(x, w, &b, spec);
  double err = max_abs_diff(y, y_ref) / std::max(1.0, max_abs(y_ref));

  const Tensor gy = random_tensor(y.shape(), rng);
  Tensor gx(x.shape()), gw(w.shape()), gb(b.shape());
  Tensor rx(x.shape()), rw(w.shape()), rb(b.shape());
  conv2d_backward(x, w, spec, gy, &gx, &gw, &gb);
  reference::conv2d_backward(x, w, spec, gy, &rx, &rw, &rb);
  for (auto [fast, ref] : {std::pair{&gx, &rx}, {&gw, &rw}, {&gb, &rb}}) {
    err = std::max(err, max_abs_diff(*fast, *ref) / std::max(1.0, max_abs(*ref)));
  }
  std::ostringstream name;
  name << "conv2d " << spec.in_channels << "->" << spec.out_channels << " k"
       << spec.kernel_h << " s" << spec.stride << " p" << spec.padding << " g"
       << spec.groups << " matches reference";
  return value_check(name.str(), err, 1e-5);
}

// Scalar loops over the SFFM definition.
double sffm_oracle_error(Rng& rng) {
  const int levels = 3, n = 2, c = 5, h = 3, w = 4;
  Tape t;
  std::vector<Var> xs, alphas;
  std::vector<Tensor> xv, av;
  for (int i = 0; i < levels; ++i) {
    xv.push_back(random_tensor(Shape{n, c, h, w}, rng));
    av.push_back(random_tensor(Shape{c, c}, rng));
    xs.push_back(t.constant(xv.back()));
    alphas.push_back(t.constant(av.back()));
  }
  const Tensor out = t.value(sffm_forward(t, xs, alphas));
  double err = 0.0;
  for (int s = 0; s < n; ++s) {
    std::vector<std::vector<double>> logit(levels, std::vector<double>(c));
    for (int i = 0; i < levels; ++i) {
      std::vector<double> pooled(c, 0.0);
      for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) pooled[ch] += xv[i].at(s, ch, y, x);
        }
        pooled[ch] /= h * w;
      }
      for (int o = 0; o < c; ++o) {
        for (int ch = 0; ch < c; ++ch) logit[i][o] += av[i][o * c + ch] * pooled[ch];
      }
    }
    for (int ch = 0; ch < c; ++ch) {
      double z = 0.0;
      for (int i = 0; i < levels; ++i) z += std::exp(logit[i][ch]);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double r = 0.0;
          for (int i = 0; i < levels; ++i) {
            r += std::exp(logit[i][ch]) / z * xv[i].at(s, ch, y, x);
          }
          err = std::max(err, std::abs(r - out.at(s, ch, y, x)));
        }
      }
    }
  }
  return err;
}

// He-initialised weights times `gain`; a gain below one keeps activations of
// deep stacks near unit scale, which keeps float32 rounding noise small.
WeightStore random_store(const std::vector<LayerDesc>& layers,
                         std::uint64_t seed, float gain = 1.0f) {
  WeightStore store = make_weight_store(layers);
  init_weights(store, seed);
  for (auto& e : store.entries()) {
    if (e.name.ends_with(".weight")) {
      for (float& v : e.value.data()) v *= gain;
    }
  }
  // Non-zero biases and spread-out slopes so every term is exercised.
  Rng rng(seed + 1);
  for (auto& e : store.entries()) {
    if (e.name.ends_with(".bias")) e.value = random_tensor(e.value.shape(), rng, -0.1f, 0.1f);
    if (e.name.ends_with(".alpha")) e.value = random_tensor(e.value.shape(), rng, 0.05f, 0.5f);
  }
  return store;
}

}  // namespace

std::vector<CheckResult> run_selftest(
    const std::function<void(const CheckResult&)>& progress) {
  std::vector<CheckResult> results;
  const auto push = [&](CheckResult r) {
    if (progress) progress(r);
    results.push_back(std::move(r));
  };
  Rng rng(2024);

  // Kernels against the serial loops.
  for (const ConvSpec& spec :
       {ConvSpec::same(4, 6, 3), ConvSpec::same(4, 6, 3, 2),
        ConvSpec::same(5, 5, 3, 5), ConvSpec::same(6, 3, 1),
        ConvSpec{3, 5, 3, 3, 2, 0, 1, true}, ConvSpec{4, 4, 3, 2, 1, 1, 1, true}}) {
    push(conv_against_reference(spec, rng));
  }
  {
    const int m = 37, n = 70, k = 19;
    const Tensor a = random_tensor(Shape{m, k}, rng);
    const Tensor b = random_tensor(Shape{k, n}, rng);
    Tensor c = random_tensor(Shape{m, n}, rng), c_ref = c;
    gemm_accumulate(m, n, k, a.ptr(), k, b.ptr(), n, c.ptr(), n);
    reference::gemm_accumulate(m, n, k, a.ptr(), k, b.ptr(), n, c_ref.ptr(), n);
    push(value_check("gemm matches reference", max_abs_diff(c, c_ref), 1e-5));
  }
  for (int r : {2, 3}) {
    const Tensor x = random_tensor(Shape{2, 3 * r * r, 4, 5}, rng);
    push(value_check("pixel shuffle round trip r=" + std::to_string(r),
                     max_abs_diff(pixel_unshuffle(pixel_shuffle(x, r), r), x),
                     0.0));
  }
  {
    const std::vector<float> logits{0.0f, std::log(2.0f), std::log(3.0f)};
    std::vector<float> p(3);
    softmax(logits, p);
    const std::vector<float> large{1000.0f, 1000.0f};
    std::vector<float> q(2);
    softmax(large, q);
    double err = std::max(std::abs(q[0] - 0.5), std::abs(q[1] - 0.5));
    for (int i = 0; i < 3; ++i) {
      err = std::max(err, std::abs(p[i] - (i + 1) / 6.0));
    }
    push(value_check("softmax of log weights", err, 1e-6));
  }
  push(value_check("sffm matches scalar loops", sffm_oracle_error(rng), 1e-5));

  // Op gradients.
  GradCheckOptions op;
  const auto conv_graph = [](ConvSpec spec) {
    return [spec](Tape& t, std::span<const Var> v) {
      return conv2d(t, v[0], v[1], v[2], spec);
    };
  };
  for (const ConvSpec& spec :
       {ConvSpec::same(4, 6, 3), ConvSpec::same(4, 6, 3, 2),
        ConvSpec::same(4, 4, 3, 4), ConvSpec::same(4, 3, 1)}) {
    push(gradient_check(
        "grad conv2d g" + std::to_string(spec.groups) + " k" +
            std::to_string(spec.kernel_h),
        conv_graph(spec),
        {random_tensor(Shape{1, 4, 5, 5}, rng), random_tensor(spec.weight_shape(), rng),
         random_tensor(Shape{spec.out_channels}, rng)},
        op));
  }
  push(gradient_check(
      "grad dense",
      [](Tape& t, std::span<const Var> v) { return dense(t, v[0], v[1], v[2]); },
      {random_tensor(Shape{2, 5}, rng), random_tensor(Shape{3, 5}, rng),
       random_tensor(Shape{3}, rng)},
      op));
  push(gradient_check(
      "grad prelu",
      [](Tape& t, std::span<const Var> v) { return prelu(t, v[0], v[1]); },
      {kink_free(Shape{1, 4, 5, 5}, rng), random_tensor(Shape{4}, rng)}, op));
  push(gradient_check(
      "grad global_avg_pool",
      [](Tape& t, std::span<const Var> v) { return global_avg_pool(t, v[0]); },
      {random_tensor(Shape{2, 4, 5, 5}, rng)}, op));
  push(gradient_check(
      "grad pixel_shuffle",
      [](Tape& t, std::span<const Var> v) { return pixel_shuffle(t, v[0], 2); },
      {random_tensor(Shape{1, 8, 3, 3}, rng)}, op));
  push(gradient_check(
      "grad concat/slice",
      [](Tape& t, std::span<const Var> v) {
        Var cat = concat_channels(t, v);
        const ChannelRange ranges[] = {{0, 1}, {1, 5}, {5, 7}};
        std::vector<Var> parts = slice_channels(t, cat, ranges);
        std::reverse(parts.begin(), parts.end());
        return concat_channels(t, parts);
      },
      {random_tensor(Shape{1, 3, 4, 4}, rng), random_tensor(Shape{1, 4, 4, 4}, rng)},
      op));
  push(gradient_check(
      "grad add",
      [](Tape& t, std::span<const Var> v) { return add(t, v[0], v[1]); },
      {random_tensor(Shape{1, 4, 5, 5}, rng), random_tensor(Shape{1, 4, 5, 5}, rng)},
      op));
  push(gradient_check(
      "grad scale_channels",
      [](Tape& t, std::span<const Var> v) { return scale_channels(t, v[0], v[1]); },
      {random_tensor(Shape{2, 4, 5, 5}, rng), random_tensor(Shape{2, 4, 1, 1}, rng)},
      op));
  push(gradient_check(
      "grad softmax_across",
      [](Tape& t, std::span<const Var> v) {
        return concat_channels(t, softmax_across(t, v));
      },
      {random_tensor(Shape{2, 4, 1, 1}, rng), random_tensor(Shape{2, 4, 1, 1}, rng),
       random_tensor(Shape{2, 4, 1, 1}, rng)},
      op));
  push(gradient_check(
      "grad sum", [](Tape& t, std::span<const Var> v) { return sum(t, v[0]); },
      {random_tensor(Shape{1, 4, 5, 5}, rng)}, op));
  {
    const Tensor target = random_tensor(Shape{1, 4, 5, 5}, rng);
    Tensor pred = kink_free(Shape{1, 4, 5, 5}, rng);
    for (std::size_t i = 0; i < pred.numel(); ++i) pred[i] += target[i];
    push(gradient_check(
        "grad l1_loss",
        [&target](Tape& t, std::span<const Var> v) {
          return l1_loss(t, v[0], target);
        },
        {pred}, op));
  }

  // Compositions.
  GradCheckOptions comp;
  comp.tolerance = 1e-2;
  comp.max_coords = 8;
  for (bool depthwise : {false, true}) {
    NetworkSpec spec;
    spec.depthwise = depthwise;
    std::vector<LayerDesc> layers;
    append_spindle_block_layers(layers, "block", spec);
    const Tensor x = random_tensor(Shape{1, spec.backbone_channels, 5, 5}, rng);
    push(gradient_check_weights(
        depthwise ? "grad depthwise spindle block" : "grad spindle block",
        random_store(layers, 11),
        [&](ParamBinder& p) {
          return spindle_block(p, "block", p.tape().constant(x), spec);
        },
        comp));
  }
  {
    std::vector<Tensor> inputs;
    for (int i = 0; i < 3; ++i) inputs.push_back(random_tensor(Shape{2, 6, 4, 4}, rng));
    for (int i = 0; i < 3; ++i) inputs.push_back(random_tensor(Shape{6, 6}, rng));
    push(gradient_check(
        "grad sffm",
        [](Tape& t, std::span<const Var> v) {
          return sffm_forward(t, v.subspan(0, 3), v.subspan(3, 3));
        },
        inputs, comp));
  }
  {
    // Tiny full network, differenced in float64 against the float32 tape.
    NetworkSpec spec;
    spec.blocks = 1;
    spec.modules = 2;
    spec.scale = 2;
    const Tensor x = random_tensor(Shape{1, 3, 8, 8}, rng, 0.0f, 1.0f);
    const Network net(spec, random_store(describe_network(spec), 13));
    const Tensor y = net.infer(x);
    const reference::Array ys =
        reference::ShadowNetwork(spec, net.weights()).forward(reference::to_array(x));
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      err = std::max(err, std::abs(y[i] - ys.v[i]));
      scale = std::max(scale, std::abs(ys.v[i]));
    }
    push(value_check("network matches float64 shadow", err / std::max(1.0, scale),
                     1e-5));
    GradCheckOptions shadow_opt;
    shadow_opt.step = 1e-3;
    shadow_opt.tolerance = 1e-2;
    shadow_opt.max_coords = 4;
    push(shadow_gradient_check("grad network B1M2 8x8", net, x, shadow_opt));
  }
  return results;
}

}  // namespace lffn
