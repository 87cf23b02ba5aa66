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

#include "lffn/kernels.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace lffn {

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel_h <= 0 ||
      kernel_w <= 0 || stride <= 0 || padding < 0 || groups <= 0) {
    throw ShapeError("conv spec has non-positive extents");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("groups=" + std::to_string(groups) +
                     " must divide in_channels=" + std::to_string(in_channels) +
                     " and out_channels=" + std::to_string(out_channels));
  }
}

Shape conv2d_output_shape(const Shape& x, const Shape& w,
                          const ConvSpec& spec) {
  spec.validate();
  if (x.rank() != 4) throw ShapeError("conv2d input must be NCHW");
  if (x.c() != spec.in_channels) {
    throw ShapeError("conv2d expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(x.c()));
  }
  if (!(w == spec.weight_shape())) {
    throw ShapeError("conv2d weight shape " + w.str() + " != expected " +
                     spec.weight_shape().str());
  }
  int oh = spec.out_h(x.h());
  int ow = spec.out_w(x.w());
  if (x.h() + 2 * spec.padding < spec.kernel_h ||
      x.w() + 2 * spec.padding < spec.kernel_w || oh < 1 || ow < 1) {
    throw ShapeError("conv2d output would be empty for input " + x.str());
  }
  return Shape{x.n(), spec.out_channels, oh, ow};
}

namespace {

constexpr int kTileRows = 4;
constexpr int kTileCols = 64;

using Vec16 = float __attribute__((vector_size(64), aligned(4)));
constexpr int kVecsPerRow = kTileCols / 16;

// Full 4x64 register tile: the hot path for every conv in the network.
inline void gemm_tile_full(int k, const float* a, int lda, const float* b,
                           int ldb, float* c, int ldc) {
  Vec16 acc[kTileRows][kVecsPerRow];
  for (int r = 0; r < kTileRows; ++r) {
    for (int v = 0; v < kVecsPerRow; ++v) {
      std::memcpy(&acc[r][v], c + r * ldc + 16 * v, sizeof(Vec16));
    }
  }
  for (int p = 0; p < k; ++p) {
    const float* brow = b + static_cast<std::size_t>(p) * ldb;
    Vec16 bv[kVecsPerRow];
    for (int v = 0; v < kVecsPerRow; ++v) {
      std::memcpy(&bv[v], brow + 16 * v, sizeof(Vec16));
    }
    for (int r = 0; r < kTileRows; ++r) {
      const float av = a[r * lda + p];
      for (int v = 0; v < kVecsPerRow; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (int r = 0; r < kTileRows; ++r) {
    for (int v = 0; v < kVecsPerRow; ++v) {
      std::memcpy(c + r * ldc + 16 * v, &acc[r][v], sizeof(Vec16));
    }
  }
}

inline void gemm_tile_edge(int rows, int cols, int k, const float* a, int lda,
                           const float* b, int ldb, float* c, int ldc) {
  for (int r = 0; r < rows; ++r) {
    float* crow = c + static_cast<std::size_t>(r) * ldc;
    for (int p = 0; p < k; ++p) {
      const float av = a[r * lda + p];
      const float* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < cols; ++j) crow[j] += av * brow[j];
    }
  }
}

std::vector<float> transpose(const float* src, int rows, int cols) {
  std::vector<float> dst(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      dst[static_cast<std::size_t>(j) * rows + i] =
          src[static_cast<std::size_t>(i) * cols + j];
    }
  }
  return dst;
}

struct ConvGeometry {
  int n, cin, h, w, cout, oh, ow, cin_g, cout_g, kg, hw_out;
};

ConvGeometry geometry(const Shape& x, const ConvSpec& s) {
  ConvGeometry g{};
  g.n = x.n();
  g.cin = x.c();
  g.h = x.h();
  g.w = x.w();
  g.cout = s.out_channels;
  g.oh = s.out_h(g.h);
  g.ow = s.out_w(g.w);
  g.cin_g = s.in_channels / s.groups;
  g.cout_g = s.out_channels / s.groups;
  g.kg = g.cin_g * s.kernel_h * s.kernel_w;
  g.hw_out = g.oh * g.ow;
  return g;
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 &&
         s.padding == 0;
}

// Unfolds one channel group of one sample into a [kg, oh*ow] matrix.
void im2col(const float* x, const ConvGeometry& g, const ConvSpec& s,
            float* col) {
  for (int ci = 0; ci < g.cin_g; ++ci) {
    const float* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      for (int kx = 0; kx < s.kernel_w; ++kx) {
        float* row =
            col + static_cast<std::size_t>((ci * s.kernel_h + ky) * s.kernel_w +
                                           kx) *
                      g.hw_out;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          float* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const float* src = plane + iy * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeometry& g, const ConvSpec& s,
            float* x) {
  for (int ci = 0; ci < g.cin_g; ++ci) {
    float* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      for (int kx = 0; kx < s.kernel_w; ++kx) {
        const float* row =
            col + static_cast<std::size_t>((ci * s.kernel_h + ky) * s.kernel_w +
                                           kx) *
                      g.hw_out;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= g.h) continue;
          float* dst = plane + iy * g.w;
          const float* src = row + oy * g.ow;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// One output plane of a depthwise convolution.
void depthwise_plane(const float* x, const float* w, float bias,
                     const ConvGeometry& g, const ConvSpec& s, float* out) {
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      float acc = bias;
      for (int ky = 0; ky < s.kernel_h; ++ky) {
        const int iy = oy * s.stride - s.padding + ky;
        if (iy < 0 || iy >= g.h) continue;
        for (int kx = 0; kx < s.kernel_w; ++kx) {
          const int ix = ox * s.stride - s.padding + kx;
          if (ix < 0 || ix >= g.w) continue;
          acc += w[ky * s.kernel_w + kx] * x[iy * g.w + ix];
        }
      }
      out[oy * g.ow + ox] = acc;
    }
  }
}

Tensor depthwise_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                         const ConvSpec& s, const Shape& out_shape) {
  const ConvGeometry g = geometry(x.shape(), s);
  Tensor out(out_shape);
  const int planes = g.n * g.cout;
  const int taps = s.kernel_h * s.kernel_w;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int c = p % g.cout;
    depthwise_plane(x.ptr() + static_cast<std::size_t>(p) * g.h * g.w,
                    w.ptr() + c * taps, bias ? (*bias)[c] : 0.0f, g, s,
                    out.ptr() + static_cast<std::size_t>(p) * g.hw_out);
  }
  return out;
}

void depthwise_backward(const Tensor& x, const Tensor& w, const ConvSpec& s,
                        const Tensor& gout, Tensor* gx, Tensor* gw,
                        Tensor* gb) {
  const ConvGeometry g = geometry(x.shape(), s);
  const int taps = s.kernel_h * s.kernel_w;
  // Per-channel parameter gradients; the batch loop stays inside so the
  // summation order does not depend on the thread count.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.cout; ++c) {
    for (int n = 0; n < g.n; ++n) {
      const std::size_t p = static_cast<std::size_t>(n) * g.cout + c;
      const float* xp = x.ptr() + p * g.h * g.w;
      const float* go = gout.ptr() + p * g.hw_out;
      if (gb) {
        float sum = 0.0f;
        for (int i = 0; i < g.hw_out; ++i) sum += go[i];
        (*gb)[c] += sum;
      }
      if (!gw) continue;
      for (int ky = 0; ky < s.kernel_h; ++ky) {
        for (int kx = 0; kx < s.kernel_w; ++kx) {
          float sum = 0.0f;
          for (int oy = 0; oy < g.oh; ++oy) {
            const int iy = oy * s.stride - s.padding + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox * s.stride - s.padding + kx;
              if (ix < 0 || ix >= g.w) continue;
              sum += go[oy * g.ow + ox] * xp[iy * g.w + ix];
            }
          }
          (*gw)[c * taps + ky * s.kernel_w + kx] += sum;
        }
      }
    }
  }
  if (!gx) return;
  const int planes = g.n * g.cout;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int c = p % g.cout;
    const float* wc = w.ptr() + c * taps;
    const float* go = gout.ptr() + static_cast<std::size_t>(p) * g.hw_out;
    float* dx = gx->ptr() + static_cast<std::size_t>(p) * g.h * g.w;
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        const float gv = go[oy * g.ow + ox];
        for (int ky = 0; ky < s.kernel_h; ++ky) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < s.kernel_w; ++kx) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix < 0 || ix >= g.w) continue;
            dx[iy * g.w + ix] += wc[ky * s.kernel_w + kx] * gv;
          }
        }
      }
    }
  }
}

}  // namespace

void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc) {
  const int row_blocks = (m + kTileRows - 1) / kTileRows;
  // Row blocks are fixed by m alone, so every element takes the same code
  // path whatever the thread count.
#pragma omp parallel for schedule(static) if (row_blocks > 1)
  for (int rb = 0; rb < row_blocks; ++rb) {
    const int i0 = rb * kTileRows;
    const int rows = std::min(kTileRows, m - i0);
    const float* ablk = a + static_cast<std::size_t>(i0) * lda;
    float* cblk = c + static_cast<std::size_t>(i0) * ldc;
    for (int j0 = 0; j0 < n; j0 += kTileCols) {
      const int cols = std::min(kTileCols, n - j0);
      if (rows == kTileRows && cols == kTileCols) {
        gemm_tile_full(k, ablk, lda, b + j0, ldb, cblk + j0, ldc);
      } else {
        gemm_tile_edge(rows, cols, k, ablk, lda, b + j0, ldb, cblk + j0, ldc);
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), spec);
  if (bias && bias->numel() != static_cast<std::size_t>(spec.out_channels)) {
    throw ShapeError("conv2d bias length mismatch");
  }
  if (spec.depthwise()) return depthwise_forward(x, w, bias, spec, out_shape);

  const ConvGeometry g = geometry(x.shape(), spec);
  Tensor out(out_shape);
  const bool pointwise = is_pointwise(spec);
  std::vector<float> col(pointwise ? 0
                                   : static_cast<std::size_t>(g.kg) * g.hw_out);
  for (int n = 0; n < g.n; ++n) {
    for (int grp = 0; grp < spec.groups; ++grp) {
      const float* xg =
          x.ptr() +
          (static_cast<std::size_t>(n) * g.cin + grp * g.cin_g) * g.h * g.w;
      float* og =
          out.ptr() +
          (static_cast<std::size_t>(n) * g.cout + grp * g.cout_g) * g.hw_out;
      for (int o = 0; o < g.cout_g; ++o) {
        const float b = bias ? (*bias)[grp * g.cout_g + o] : 0.0f;
        std::fill(og + static_cast<std::size_t>(o) * g.hw_out,
                  og + static_cast<std::size_t>(o + 1) * g.hw_out, b);
      }
      const float* colp = xg;
      if (!pointwise) {
        im2col(xg, g, spec, col.data());
        colp = col.data();
      }
      const float* wg = w.ptr() + static_cast<std::size_t>(grp) * g.cout_g * g.kg;
      gemm_accumulate(g.cout_g, g.hw_out, g.kg, wg, g.kg, colp, g.hw_out, og,
                      g.hw_out);
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_b) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), spec);
  if (!(grad_out.shape() == out_shape)) {
    throw ShapeError("conv2d upstream gradient shape mismatch");
  }
  if (spec.depthwise()) {
    depthwise_backward(x, w, spec, grad_out, grad_x, grad_w, grad_b);
    return;
  }
  const ConvGeometry g = geometry(x.shape(), spec);
  if (grad_b) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < g.cout; ++o) {
      float total = 0.0f;
      for (int n = 0; n < g.n; ++n) {
        const float* go = grad_out.ptr() +
                          (static_cast<std::size_t>(n) * g.cout + o) * g.hw_out;
        float sum = 0.0f;
        for (int i = 0; i < g.hw_out; ++i) sum += go[i];
        total += sum;
      }
      (*grad_b)[o] += total;
    }
  }
  const bool pointwise = is_pointwise(spec);
  std::vector<float> col(pointwise ? 0
                                   : static_cast<std::size_t>(g.kg) * g.hw_out);
  for (int grp = 0; grp < spec.groups; ++grp) {
    const float* wg = w.ptr() + static_cast<std::size_t>(grp) * g.cout_g * g.kg;
    const std::vector<float> wt = grad_x ? transpose(wg, g.cout_g, g.kg)
                                         : std::vector<float>{};
    for (int n = 0; n < g.n; ++n) {
      const float* xg =
          x.ptr() +
          (static_cast<std::size_t>(n) * g.cin + grp * g.cin_g) * g.h * g.w;
      const float* go =
          grad_out.ptr() +
          (static_cast<std::size_t>(n) * g.cout + grp * g.cout_g) * g.hw_out;
      if (grad_w) {
        const float* colp = xg;
        if (!pointwise) {
          im2col(xg, g, spec, col.data());
          colp = col.data();
        }
        const std::vector<float> col_t = transpose(colp, g.kg, g.hw_out);
        float* gw = grad_w->ptr() + static_cast<std::size_t>(grp) * g.cout_g * g.kg;
        gemm_accumulate(g.cout_g, g.kg, g.hw_out, go, g.hw_out, col_t.data(),
                        g.kg, gw, g.kg);
      }
      if (grad_x) {
        float* gx = grad_x->ptr() +
                    (static_cast<std::size_t>(n) * g.cin + grp * g.cin_g) *
                        g.h * g.w;
        if (pointwise) {
          gemm_accumulate(g.kg, g.hw_out, g.cout_g, wt.data(), g.cout_g, go,
                          g.hw_out, gx, g.hw_out);
        } else {
          std::fill(col.begin(), col.end(), 0.0f);
          gemm_accumulate(g.kg, g.hw_out, g.cout_g, wt.data(), g.cout_g, go,
                          g.hw_out, col.data(), g.hw_out);
          col2im(col.data(), g, spec, gx);
        }
      }
    }
  }
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw ShapeError("pixel_shuffle input must be NCHW");
  if (r < 1 || s.c() % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c()) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  const int oc = s.c() / (r * r);
  Tensor out = Tensor::nchw(s.n(), oc, s.h() * r, s.w() * r);
  const int planes = s.n() * oc;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int n = p / oc;
    const int c = p % oc;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        const int q = c * r * r + i * r + j;
        for (int y = 0; y < s.h(); ++y) {
          for (int xx = 0; xx < s.w(); ++xx) {
            out.at(n, c, y * r + i, xx * r + j) = x.at(n, q, y, xx);
          }
        }
      }
    }
  }
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw ShapeError("pixel_unshuffle input must be NCHW");
  if (r < 1 || s.h() % r != 0 || s.w() % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial extents not divisible by r");
  }
  const int oh = s.h() / r;
  const int ow = s.w() / r;
  Tensor out = Tensor::nchw(s.n(), s.c() * r * r, oh, ow);
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
          const int q = c * r * r + i * r + j;
          for (int y = 0; y < oh; ++y) {
            for (int xx = 0; xx < ow; ++xx) {
              out.at(n, q, y, xx) = x.at(n, c, y * r + i, xx * r + j);
            }
          }
        }
      }
    }
  }
  return out;
}

void softmax(std::span<const float> in, std::span<float> out) {
  if (in.size() != out.size()) throw ShapeError("softmax size mismatch");
  if (in.empty()) return;
  for (float v : in) {
    if (std::isnan(v)) throw NonFiniteError("softmax received NaN");
  }
  const float mx = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double e = std::exp(static_cast<double>(in[i]) - mx);
    out[i] = static_cast<float>(e);
    sum += e;
  }
  for (float& v : out) v = static_cast<float>(v / sum);
}

namespace reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec) {
  const Shape os = conv2d_output_shape(x.shape(), w.shape(), spec);
  const Shape& xs = x.shape();
  const int cin_g = spec.in_channels / spec.groups;
  const int cout_g = spec.out_channels / spec.groups;
  Tensor out(os);
  for (int n = 0; n < os.n(); ++n) {
    for (int o = 0; o < os.c(); ++o) {
      const int grp = o / cout_g;
      for (int oy = 0; oy < os.h(); ++oy) {
        for (int ox = 0; ox < os.w(); ++ox) {
          float acc = bias ? (*bias)[o] : 0.0f;
          for (int ci = 0; ci < cin_g; ++ci) {
            for (int ky = 0; ky < spec.kernel_h; ++ky) {
              for (int kx = 0; kx < spec.kernel_w; ++kx) {
                const int iy = oy * spec.stride - spec.padding + ky;
                const int ix = ox * spec.stride - spec.padding + kx;
                if (iy < 0 || iy >= xs.h() || ix < 0 || ix >= xs.w()) continue;
                acc += w.at(o, ci, ky, kx) * x.at(n, grp * cin_g + ci, iy, ix);
              }
            }
          }
          out.at(n, o, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_b) {
  const Shape os = conv2d_output_shape(x.shape(), w.shape(), spec);
  const Shape& xs = x.shape();
  const int cin_g = spec.in_channels / spec.groups;
  const int cout_g = spec.out_channels / spec.groups;
  for (int n = 0; n < os.n(); ++n) {
    for (int o = 0; o < os.c(); ++o) {
      const int grp = o / cout_g;
      for (int oy = 0; oy < os.h(); ++oy) {
        for (int ox = 0; ox < os.w(); ++ox) {
          const float g = grad_out.at(n, o, oy, ox);
          if (grad_b) (*grad_b)[o] += g;
          for (int ci = 0; ci < cin_g; ++ci) {
            for (int ky = 0; ky < spec.kernel_h; ++ky) {
              for (int kx = 0; kx < spec.kernel_w; ++kx) {
                const int iy = oy * spec.stride - spec.padding + ky;
                const int ix = ox * spec.stride - spec.padding + kx;
                if (iy < 0 || iy >= xs.h() || ix < 0 || ix >= xs.w()) continue;
                const int c = grp * cin_g + ci;
                if (grad_w) grad_w->at(o, ci, ky, kx) += g * x.at(n, c, iy, ix);
                if (grad_x) grad_x->at(n, c, iy, ix) += g * w.at(o, ci, ky, kx);
              }
            }
          }
        }
      }
    }
  }
}

void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      float acc = c[static_cast<std::size_t>(i) * ldc + j];
      for (int p = 0; p < k; ++p) {
        acc += a[static_cast<std::size_t>(i) * lda + p] *
               b[static_cast<std::size_t>(p) * ldb + j];
      }
      c[static_cast<std::size_t>(i) * ldc + j] = acc;
    }
  }
}

}  // namespace reference
}  // namespace lffn
