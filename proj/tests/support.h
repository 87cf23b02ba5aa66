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


// Test-side oracles and fixtures, written independently of the library code
// they check.

#ifndef LFFN_TESTS_SUPPORT_H_
#define LFFN_TESTS_SUPPORT_H_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "lffn/imaging.h"
#include "lffn/kernels.h"
#include "lffn/tape.h"
#include "lffn/tensor.h"

namespace testing {

inline lffn::Tensor random_tensor(lffn::Shape shape, std::uint64_t seed,
                                  float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  lffn::Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

inline double max_abs_diff(const lffn::Tensor& a, const lffn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return m;
}

// Seven nested loops, accumulated in double.
inline lffn::Tensor loop_conv(const lffn::Tensor& x, const lffn::Tensor& w,
                              const lffn::Tensor* b, const lffn::ConvSpec& s) {
  const int n = x.shape().n(), h = x.shape().h(), wd = x.shape().w();
  const int oh = (h + 2 * s.padding - s.kernel_h) / s.stride + 1;
  const int ow = (wd + 2 * s.padding - s.kernel_w) / s.stride + 1;
  const int cin_g = s.in_channels / s.groups;
  const int cout_g = s.out_channels / s.groups;
  lffn::Tensor y = lffn::Tensor::nchw(n, s.out_channels, oh, ow);
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b ? (*b)[oc] : 0.0;
          const int g = oc / cout_g;
          for (int ic = 0; ic < cin_g; ++ic)
            for (int ky = 0; ky < s.kernel_h; ++ky)
              for (int kx = 0; kx < s.kernel_w; ++kx) {
                const int iy = oy * s.stride - s.padding + ky;
                const int ix = ox * s.stride - s.padding + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += static_cast<double>(x.at(in, g * cin_g + ic, iy, ix)) *
                       w.at(oc, ic, ky, kx);
              }
          y.at(in, oc, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

// SFFM in scalar double loops: pool each level, project with its matrix,
// softmax across levels per channel, then mix.
inline lffn::Tensor sffm_oracle(const std::vector<lffn::Tensor>& levels,
                                const std::vector<lffn::Tensor>& alphas) {
  const lffn::Shape s = levels[0].shape();
  const int m = static_cast<int>(levels.size());
  const int hw = s.h() * s.w();
  lffn::Tensor out(s);
  for (int n = 0; n < s.n(); ++n) {
    std::vector<std::vector<double>> pooled(m, std::vector<double>(s.c()));
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < s.c(); ++c) {
        double acc = 0;
        for (int p = 0; p < hw; ++p) acc += levels[i][(n * s.c() + c) * hw + p];
        pooled[i][c] = acc / hw;
      }
    for (int j = 0; j < s.c(); ++j) {
      std::vector<double> y(m, 0.0);
      for (int i = 0; i < m; ++i)
        for (int c = 0; c < s.c(); ++c) y[i] += alphas[i][j * s.c() + c] * pooled[i][c];
      double denom = 0;
      for (int i = 0; i < m; ++i) denom += std::exp(y[i]);
      for (int p = 0; p < hw; ++p) {
        double r = 0;
        for (int i = 0; i < m; ++i) {
          r += std::exp(y[i]) / denom * levels[i][(n * s.c() + j) * hw + p];
        }
        out[(n * s.c() + j) * hw + p] = static_cast<float>(r);
      }
    }
  }
  return out;
}

// Scalar function of the inputs, evaluated without a gradient.
using ScalarFn = std::function<double(const std::vector<lffn::Tensor>&)>;

// Central difference of f with respect to inputs[which][index].
inline double central_difference(const ScalarFn& f,
                                 std::vector<lffn::Tensor> inputs, int which,
                                 std::size_t index, double h) {
  const float base = inputs[which][index];
  inputs[which][index] = static_cast<float>(base + h);
  const double up = f(inputs);
  inputs[which][index] = static_cast<float>(base - h);
  const double down = f(inputs);
  return (up - down) / (2.0 * h);
}

// ||fd - g|| / max(||fd||, ||g||) over every coordinate of every input.
// `graph` builds a scalar on the tape from one leaf per input.
inline double fd_relative_error(
    const std::function<lffn::Var(lffn::Tape&, std::vector<lffn::Var>&)>& graph,
    const std::vector<lffn::Tensor>& inputs, double h) {
  lffn::Tape tape;
  std::vector<lffn::Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(tape.leaf(inputs[i], "in" + std::to_string(i)));
  }
  const lffn::Var out = graph(tape, leaves);
  const lffn::GradientMap grads = tape.backward(out);

  const ScalarFn f = [&](const std::vector<lffn::Tensor>& xs) {
    lffn::Tape t;
    std::vector<lffn::Var> vs;
    for (const auto& x : xs) vs.push_back(t.constant(x));
    const lffn::Var o = graph(t, vs);
    return static_cast<double>(t.value(o)[0]);
  };
  double diff = 0.0, nfd = 0.0, ng = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const lffn::Tensor& g = grads.at("in" + std::to_string(i));
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      const double fd =
          central_difference(f, inputs, static_cast<int>(i), k, h);
      diff += (fd - g[k]) * (fd - g[k]);
      nfd += fd * fd;
      ng += static_cast<double>(g[k]) * g[k];
    }
  }
  const double denom = std::max(std::sqrt(std::max(nfd, ng)), 1e-12);
  return std::sqrt(diff) / denom;
}

// Scalar loss sum(r * y) for a fixed pseudo-random r, so every output
// element contributes with a distinct weight.
inline lffn::Var project(lffn::Tape& t, lffn::Var y, std::uint64_t seed = 7) {
  const lffn::Tensor r = random_tensor(t.value(y).shape(), seed, 0.5f, 1.5f);
  return lffn::weighted_sum(t, y, r);
}

// Smooth texture below the LR Nyquist limit plus soft-edged shapes over a
// gentle shading, quantized to 8 bits. Bicubic round trips blur the texture
// noticeably, so a small network can beat them by memorizing the image.
inline lffn::ImagePlane textured_image(int w, int h) {
  constexpr double kPi = 3.14159265358979323846;
  lffn::ImagePlane img(w, h, 3, lffn::ColorSpace::kRgb);
  auto edge = [](double d) { return 1.0 / (1.0 + std::exp(-2.5 * d)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double tex = 0.24 * std::sin(2 * kPi * (px / 6.0 + py / 9.0)) +
                         0.16 * std::sin(2 * kPi * (py / 5.0 - px / 13.0));
      const double base[3] = {0.3 + tex + 0.004 * px, 0.4 + tex + 0.003 * py,
                              0.5 - tex};
      const double disk = edge(14.0 - std::hypot(px - 40.0, py - 22.0));
      const double rect =
          edge(std::min({px - 6.0, 30.0 - px, py - 34.0, 58.0 - py}));
      const double band =
          edge(3.0 - std::abs(0.6 * px - py + 10.0) / std::hypot(0.6, 1.0));
      const double cd[3] = {0.9, 0.75, 0.2}, cr[3] = {0.15, 0.2, 0.7},
                   cb[3] = {0.95, 0.95, 0.95};
      for (int c = 0; c < 3; ++c) {
        double v = base[c];
        v = v * (1 - disk) + cd[c] * disk;
        v = v * (1 - rect) + cr[c] * rect;
        v = v * (1 - band) + cb[c] * band;
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return lffn::quantize_8bit(img);
}

// Uniform noise image, 8-bit quantized.
inline lffn::ImagePlane noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  lffn::ImagePlane img(w, h, 3, lffn::ColorSpace::kRgb);
  for (float& v : img.data()) v = dist(rng);
  return lffn::quantize_8bit(img);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lffn_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

#endif  // LFFN_TESTS_SUPPORT_H_
