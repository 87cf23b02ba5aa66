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

// Efficiency accounting. Mult-Adds count multiply-accumulates of conv and
// dense layers only; activations, additions, pooling, softmax and pixel
// shuffle are free. Backbone layers run on the LR grid, which is the HR
// resolution divided by the scale and floored.

#ifndef LFFN_ANALYSIS_H_
#define LFFN_ANALYSIS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "lffn/imaging.h"
#include "lffn/network.h"

namespace lffn {

struct CostRow {
  std::string name;
  std::int64_t params = 0;
  std::int64_t mult_adds = 0;
};

struct CostReport {
  std::string label;
  int hr_width = 0;
  int hr_height = 0;
  int lr_width = 0;
  int lr_height = 0;
  std::vector<CostRow> rows;
  std::int64_t total_params = 0;
  std::int64_t total_mult_adds = 0;

  std::string to_text() const;
  std::string to_csv() const;
};

inline constexpr int kReferenceHrWidth = 1280;
inline constexpr int kReferenceHrHeight = 720;

// One row per tensor of the network's WeightStore.
CostReport count_params(const NetworkSpec& spec);
// One row per conv/dense layer.
CostReport count_mult_adds(const NetworkSpec& spec,
                           int hr_width = kReferenceHrWidth,
                           int hr_height = kReferenceHrHeight);
// One row per layer with both columns.
CostReport analyze(const NetworkSpec& spec, int hr_width = kReferenceHrWidth,
                   int hr_height = kReferenceHrHeight);

std::int64_t layer_mult_adds(const LayerDesc& layer, int lr_width,
                             int lr_height);
std::int64_t count_layer_params(const std::vector<LayerDesc>& layers);

// Parameters of one spindle block (as configured by `spec`) divided by those
// of a 64-wide residual block.
double spindle_to_residual_ratio(const NetworkSpec& spec);

// Per-level SFFM weights for one image: result[level][channel].
std::vector<std::vector<double>> dump_sffm_weights(const Network& net,
                                                   const ImagePlane& image);
// Rows are levels, columns channels; every column sums to 1.
std::string sffm_weights_csv(const std::vector<std::vector<double>>& w);

}  // namespace lffn

#endif  // LFFN_ANALYSIS_H_
