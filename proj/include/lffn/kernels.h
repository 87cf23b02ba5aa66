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

// Raw compute kernels behind the differentiable ops. The default namespace
// holds the OpenMP-parallel versions; `reference` holds plain serial loops
// kept for testing and benchmarking.

#ifndef LFFN_KERNELS_H_
#define LFFN_KERNELS_H_

#include <span>

#include "lffn/tensor.h"

namespace lffn {

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  bool bias = true;

  // Same-padded k×k convolution, the only kind the network uses.
  static ConvSpec same(int in, int out, int k, int groups = 1) {
    return ConvSpec{in, out, k, k, 1, k / 2, groups, true};
  }

  bool depthwise() const {
    return groups == in_channels && groups == out_channels;
  }
  int out_h(int h) const { return (h + 2 * padding - kernel_h) / stride + 1; }
  int out_w(int w) const { return (w + 2 * padding - kernel_w) / stride + 1; }
  Shape weight_shape() const {
    return Shape{out_channels, in_channels / groups, kernel_h, kernel_w};
  }
  long long weight_count() const {
    return static_cast<long long>(out_channels) * (in_channels / groups) *
           kernel_h * kernel_w;
  }

  // Throws ShapeError when extents are non-positive or groups do not divide
  // both channel counts.
  void validate() const;
};

// Checks x and w against spec and returns the output shape.
Shape conv2d_output_shape(const Shape& x, const Shape& w, const ConvSpec& spec);

// Cross-correlation with zero padding. `bias` may be null.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec);

// Accumulates gradients into any non-null destination.
void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_b);

// C[M,N] += A[M,K] * B[K,N], all row-major with leading dimensions.
void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc);

Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

// Numerically stable softmax of one vector; `out` may alias `in`.
void softmax(std::span<const float> in, std::span<float> out);

namespace reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec);
void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_b);
void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc);

}  // namespace reference
}  // namespace lffn

#endif  // LFFN_KERNELS_H_
