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

#include <cmath>
#include <cstring>

#include "lffn/tape.h"

namespace lffn {
namespace {

std::size_t plane_size(const Shape& s) {
  return static_cast<std::size_t>(s.h()) * s.w();
}

void require_nchw(const Tensor& t, const char* op) {
  if (t.shape().rank() != 4) {
    throw ShapeError(std::string(op) + " expects an NCHW tensor, got " +
                     t.shape().str());
  }
}

Tensor scalar(double v) { return Tensor(Shape{1}, {static_cast<float>(v)}); }

}  // namespace

Var conv2d(Tape& t, Var x, Var w, std::optional<Var> b, const ConvSpec& spec) {
  const Tensor* bias = b ? &t.value(*b) : nullptr;
  if (spec.bias != (b.has_value())) {
    throw ShapeError("conv2d: bias presence does not match spec");
  }
  Tensor out = conv2d_forward(t.value(x), t.value(w), bias, spec);
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return t.record(
      std::move(out), std::move(inputs),
      [x, w, spec](const Tape& tp, const Tensor& g, std::span<Tensor* const> gi) {
        conv2d_backward(tp.value(x), tp.value(w), spec, g, gi[0], gi[1],
                        gi.size() > 2 ? gi[2] : nullptr);
      },
      "conv2d");
}

Var dense(Tape& t, Var x, Var w, std::optional<Var> b) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (wv.shape().rank() != 2) throw ShapeError("dense weight must be rank 2");
  const int n = xv.shape()[0];
  const int cin = static_cast<int>(xv.numel() / (n ? n : 1));
  const int cout = wv.shape()[0];
  if (wv.shape()[1] != cin) {
    throw ShapeError("dense: weight " + wv.shape().str() +
                     " does not accept input of width " + std::to_string(cin));
  }
  if (b && t.value(*b).numel() != static_cast<std::size_t>(cout)) {
    throw ShapeError("dense: bias length mismatch");
  }
  Tensor out = Tensor::nchw(n, cout, 1, 1);
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < cout; ++o) {
      float acc = b ? t.value(*b)[o] : 0.0f;
      for (int c = 0; c < cin; ++c) {
        acc += wv[static_cast<std::size_t>(o) * cin + c] *
               xv[static_cast<std::size_t>(i) * cin + c];
      }
      out[static_cast<std::size_t>(i) * cout + o] = acc;
    }
  }
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return t.record(
      std::move(out), std::move(inputs),
      [x, w, n, cin, cout](const Tape& tp, const Tensor& g,
                           std::span<Tensor* const> gi) {
        const Tensor& xv = tp.value(x);
        const Tensor& wv = tp.value(w);
        for (int i = 0; i < n; ++i) {
          for (int o = 0; o < cout; ++o) {
            const float go = g[static_cast<std::size_t>(i) * cout + o];
            for (int c = 0; c < cin; ++c) {
              const std::size_t wi = static_cast<std::size_t>(o) * cin + c;
              const std::size_t xi = static_cast<std::size_t>(i) * cin + c;
              if (gi[0]) (*gi[0])[xi] += wv[wi] * go;
              if (gi[1]) (*gi[1])[wi] += xv[xi] * go;
            }
            if (gi.size() > 2 && gi[2]) (*gi[2])[o] += go;
          }
        }
      },
      "dense");
}

Var prelu(Tape& t, Var x, Var alpha) {
  const Tensor& xv = t.value(x);
  const Tensor& av = t.value(alpha);
  require_nchw(xv, "prelu");
  const Shape& s = xv.shape();
  if (av.numel() != static_cast<std::size_t>(s.c())) {
    throw ShapeError("prelu: slope count " + std::to_string(av.numel()) +
                     " != channels " + std::to_string(s.c()));
  }
  const std::size_t hw = plane_size(s);
  Tensor out(s);
  const int planes = s.n() * s.c();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float a = av[p % s.c()];
    const float* src = xv.ptr() + p * hw;
    float* dst = out.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      dst[i] = src[i] >= 0.0f ? src[i] : a * src[i];
    }
  }
  return t.record(
      std::move(out), {x, alpha},
      [x, alpha](const Tape& tp, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xv = tp.value(x);
        const Tensor& av = tp.value(alpha);
        const Shape& s = xv.shape();
        const std::size_t hw = plane_size(s);
        const int planes = s.n() * s.c();
        if (gi[0]) {
#pragma omp parallel for schedule(static)
          for (int p = 0; p < planes; ++p) {
            const float a = av[p % s.c()];
            const float* src = xv.ptr() + p * hw;
            const float* go = g.ptr() + p * hw;
            float* dx = gi[0]->ptr() + p * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              dx[i] += src[i] >= 0.0f ? go[i] : a * go[i];
            }
          }
        }
        if (gi[1]) {
          for (int c = 0; c < s.c(); ++c) {
            float total = 0.0f;
            for (int n = 0; n < s.n(); ++n) {
              const std::size_t p = static_cast<std::size_t>(n) * s.c() + c;
              const float* src = xv.ptr() + p * hw;
              const float* go = g.ptr() + p * hw;
              float acc = 0.0f;
              for (std::size_t i = 0; i < hw; ++i) {
                if (src[i] < 0.0f) acc += go[i] * src[i];
              }
              total += acc;
            }
            (*gi[1])[c] += total;
          }
        }
      },
      "prelu");
}

Var global_avg_pool(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_nchw(xv, "global_avg_pool");
  const Shape& s = xv.shape();
  const std::size_t hw = plane_size(s);
  if (hw == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out = Tensor::nchw(s.n(), s.c(), 1, 1);
  for (int p = 0; p < s.n() * s.c(); ++p) {
    double acc = 0.0;
    const float* src = xv.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[p] = static_cast<float>(acc / static_cast<double>(hw));
  }
  return t.record(
      std::move(out), {x},
      [hw](const Tape&, const Tensor& g, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        const float inv = 1.0f / static_cast<float>(hw);
        for (std::size_t p = 0; p < g.numel(); ++p) {
          const float v = g[p] * inv;
          float* dx = gi[0]->ptr() + p * hw;
          for (std::size_t i = 0; i < hw; ++i) dx[i] += v;
        }
      },
      "global_avg_pool");
}

Var pixel_shuffle(Tape& t, Var x, int r) {
  Tensor out = pixel_shuffle(t.value(x), r);
  return t.record(
      std::move(out), {x},
      [r](const Tape&, const Tensor& g, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        const Tensor back = pixel_unshuffle(g, r);
        for (std::size_t i = 0; i < back.numel(); ++i) (*gi[0])[i] += back[i];
      },
      "pixel_shuffle");
}

Var concat_channels(Tape& t, std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape& first = t.value(xs[0]).shape();
  if (first.rank() != 4) throw ShapeError("concat_channels expects NCHW");
  int total_c = 0;
  for (Var v : xs) {
    const Shape& s = t.value(v).shape();
    if (s.rank() != 4 || s.n() != first.n() || s.h() != first.h() ||
        s.w() != first.w()) {
      throw ShapeError("concat_channels: spatial/batch mismatch " + s.str() +
                       " vs " + first.str());
    }
    total_c += s.c();
  }
  const std::size_t hw = plane_size(first);
  Tensor out = Tensor::nchw(first.n(), total_c, first.h(), first.w());
  std::vector<int> offsets;
  int offset = 0;
  for (Var v : xs) {
    const Tensor& src = t.value(v);
    const std::size_t block = src.shape().c() * hw;
    for (int n = 0; n < first.n(); ++n) {
      std::memcpy(out.ptr() + (static_cast<std::size_t>(n) * total_c + offset) * hw,
                  src.ptr() + n * block, block * sizeof(float));
    }
    offsets.push_back(offset);
    offset += src.shape().c();
  }
  const int batch = first.n();
  return t.record(
      std::move(out), std::vector<Var>(xs.begin(), xs.end()),
      [offsets, total_c, hw, batch](const Tape&, const Tensor& g,
                                    std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < gi.size(); ++i) {
          if (!gi[i]) continue;
          const int c = gi[i]->shape().c();
          for (int n = 0; n < batch; ++n) {
            const float* src =
                g.ptr() + (static_cast<std::size_t>(n) * total_c + offsets[i]) * hw;
            float* dst = gi[i]->ptr() + static_cast<std::size_t>(n) * c * hw;
            for (std::size_t k = 0; k < c * hw; ++k) dst[k] += src[k];
          }
        }
      },
      "concat_channels");
}

std::vector<Var> slice_channels(Tape& t, Var x,
                                std::span<const ChannelRange> ranges) {
  const Tensor& xv = t.value(x);
  require_nchw(xv, "slice_channels");
  const Shape s = xv.shape();
  int expect = 0;
  for (const ChannelRange& r : ranges) {
    if (r.begin != expect || r.end <= r.begin) {
      throw ShapeError(
          "slice_channels: ranges must be ordered, non-empty and disjoint");
    }
    expect = r.end;
  }
  if (expect != s.c()) {
    throw ShapeError("slice_channels: ranges do not cover all channels");
  }
  const std::size_t hw = plane_size(s);
  std::vector<Var> outs;
  for (const ChannelRange& r : ranges) {
    const int c = r.end - r.begin;
    Tensor out = Tensor::nchw(s.n(), c, s.h(), s.w());
    for (int n = 0; n < s.n(); ++n) {
      std::memcpy(out.ptr() + static_cast<std::size_t>(n) * c * hw,
                  xv.ptr() + (static_cast<std::size_t>(n) * s.c() + r.begin) * hw,
                  c * hw * sizeof(float));
    }
    const int begin = r.begin;
    outs.push_back(t.record(
        std::move(out), {x},
        [s, begin, c, hw](const Tape&, const Tensor& g,
                          std::span<Tensor* const> gi) {
          if (!gi[0]) return;
          for (int n = 0; n < s.n(); ++n) {
            const float* src = g.ptr() + static_cast<std::size_t>(n) * c * hw;
            float* dst =
                gi[0]->ptr() + (static_cast<std::size_t>(n) * s.c() + begin) * hw;
            for (std::size_t k = 0; k < c * hw; ++k) dst[k] += src[k];
          }
        },
        "slice_channels"));
  }
  return outs;
}

Var add(Tape& t, Var x, Var y) {
  const Tensor& xv = t.value(x);
  const Tensor& yv = t.value(y);
  if (!(xv.shape() == yv.shape())) {
    throw ShapeError("add: shape mismatch " + xv.shape().str() + " vs " +
                     yv.shape().str());
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] + yv[i];
  return t.record(
      std::move(out), {x, y},
      [](const Tape&, const Tensor& g, std::span<Tensor* const> gi) {
        for (Tensor* d : gi) {
          if (!d) continue;
          for (std::size_t i = 0; i < g.numel(); ++i) (*d)[i] += g[i];
        }
      },
      "add");
}

Var scale_channels(Tape& t, Var x, Var w) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  require_nchw(xv, "scale_channels");
  const Shape& s = xv.shape();
  if (wv.numel() != static_cast<std::size_t>(s.n()) * s.c()) {
    throw ShapeError("scale_channels: weight count " +
                     std::to_string(wv.numel()) + " != N*C of " + s.str());
  }
  const std::size_t hw = plane_size(s);
  Tensor out(s);
  for (std::size_t p = 0; p < wv.numel(); ++p) {
    for (std::size_t i = 0; i < hw; ++i) {
      out[p * hw + i] = xv[p * hw + i] * wv[p];
    }
  }
  return t.record(
      std::move(out), {x, w},
      [x, w, hw](const Tape& tp, const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xv = tp.value(x);
        const Tensor& wv = tp.value(w);
        for (std::size_t p = 0; p < wv.numel(); ++p) {
          float acc = 0.0f;
          for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t k = p * hw + i;
            if (gi[0]) (*gi[0])[k] += g[k] * wv[p];
            acc += g[k] * xv[k];
          }
          if (gi[1]) (*gi[1])[p] += acc;
        }
      },
      "scale_channels");
}

std::vector<Var> softmax_across(Tape& t, std::span<const Var> logits) {
  if (logits.empty()) throw ShapeError("softmax_across: no inputs");
  const Shape s = t.value(logits[0]).shape();
  for (Var v : logits) {
    if (!(t.value(v).shape() == s)) {
      throw ShapeError("softmax_across: inputs must share one shape");
    }
  }
  const int m = static_cast<int>(logits.size());
  const int count = static_cast<int>(s.numel());
  // Stacked (M, numel) weights; each output picks one row.
  Tensor stacked(Shape{m, count});
  std::vector<float> column(m);
  for (int p = 0; p < count; ++p) {
    for (int i = 0; i < m; ++i) column[i] = t.value(logits[i])[p];
    softmax(column, column);
    for (int i = 0; i < m; ++i) stacked[static_cast<std::size_t>(i) * count + p] = column[i];
  }
  Var all = t.record(
      stacked, std::vector<Var>(logits.begin(), logits.end()),
      [m, count, stacked](const Tape&, const Tensor& g,
                          std::span<Tensor* const> gi) {
        for (int p = 0; p < count; ++p) {
          double dot = 0.0;
          for (int i = 0; i < m; ++i) {
            const std::size_t k = static_cast<std::size_t>(i) * count + p;
            dot += static_cast<double>(g[k]) * stacked[k];
          }
          for (int i = 0; i < m; ++i) {
            if (!gi[i]) continue;
            const std::size_t k = static_cast<std::size_t>(i) * count + p;
            (*gi[i])[p] += static_cast<float>(stacked[k] * (g[k] - dot));
          }
        }
      },
      "softmax_across");

  std::vector<Var> outs;
  for (int i = 0; i < m; ++i) {
    Tensor row(s);
    std::memcpy(row.ptr(), stacked.ptr() + static_cast<std::size_t>(i) * count,
                count * sizeof(float));
    outs.push_back(t.record(
        std::move(row), {all},
        [i, count](const Tape&, const Tensor& g, std::span<Tensor* const> gi) {
          if (!gi[0]) return;
          float* dst = gi[0]->ptr() + static_cast<std::size_t>(i) * count;
          for (int p = 0; p < count; ++p) dst[p] += g[p];
        },
        "softmax_pick"));
  }
  return outs;
}

Var sum(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  double acc = 0.0;
  for (float v : xv.data()) acc += v;
  return t.record(
      scalar(acc), {x},
      [](const Tape&, const Tensor& g, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        for (float& v : gi[0]->data()) v += g[0];
      },
      "sum");
}

Var weighted_sum(Tape& t, Var x, const Tensor& weights) {
  const Tensor& xv = t.value(x);
  if (xv.numel() != weights.numel()) {
    throw ShapeError("weighted_sum: weight count mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    acc += static_cast<double>(xv[i]) * weights[i];
  }
  return t.record(
      scalar(acc), {x},
      [weights](const Tape&, const Tensor& g, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        for (std::size_t i = 0; i < weights.numel(); ++i) {
          (*gi[0])[i] += g[0] * weights[i];
        }
      },
      "weighted_sum");
}

Var l1_loss(Tape& t, Var pred, const Tensor& target) {
  const Tensor& pv = t.value(pred);
  if (!(pv.shape() == target.shape())) {
    throw ShapeError("l1_loss: shape mismatch " + pv.shape().str() + " vs " +
                     target.shape().str());
  }
  if (pv.numel() == 0) throw ShapeError("l1_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    acc += std::fabs(static_cast<double>(pv[i]) - target[i]);
  }
  const double n = static_cast<double>(pv.numel());
  return t.record(
      scalar(acc / n), {pred},
      [pred, target, n](const Tape& tp, const Tensor& g,
                        std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        const Tensor& pv = tp.value(pred);
        const float step = static_cast<float>(g[0] / n);
        for (std::size_t i = 0; i < pv.numel(); ++i) {
          const float d = pv[i] - target[i];
          // Subgradient 0 at exact ties.
          if (d > 0.0f) {
            (*gi[0])[i] += step;
          } else if (d < 0.0f) {
            (*gi[0])[i] -= step;
          }
        }
      },
      "l1_loss");
}

}  // namespace lffn
