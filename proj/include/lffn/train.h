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

#ifndef LFFN_TRAIN_H_
#define LFFN_TRAIN_H_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lffn/imaging.h"
#include "lffn/network.h"
#include "lffn/tape.h"
#include "json.hpp"

namespace lffn {

struct TrainConfig {
  int batch = 16;
  int lr_patch = 32;
  double lr0 = 8e-4;
  int halve_every = 20;  // epochs
  int iters_per_epoch = 1000;
  int iterations = 0;  // total optimizer steps; 0 means one epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_theta = 0.01;
  std::uint64_t seed = 1;

  static constexpr double kFineTuneLr = 4e-4;

  void validate() const;
};

// Field names mirror the struct; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   TrainConfig base = {});
nlohmann::json to_json(const TrainConfig& cfg);

// 0..3 quarter turns counter-clockwise, then an optional horizontal flip.
struct Augmentation {
  int rotation = 0;
  bool flip = false;
  int index() const { return rotation * 2 + (flip ? 1 : 0); }
  static Augmentation from_index(int i) { return {i / 2, (i % 2) == 1}; }
};

ImagePlane apply_augmentation(const ImagePlane& img, Augmentation aug);

using Rng = std::mt19937_64;

struct Batch {
  Tensor lr;  // (batch, 3, p, p)
  Tensor hr;  // (batch, 3, p*scale, p*scale)
  std::vector<Augmentation> augmentations;
};

// Random crop + dihedral augmentation + bicubic downscale, per sample.
Batch sample_batch(std::span<const ImagePlane> corpus, int scale,
                   const TrainConfig& cfg, Rng& rng);

// Elementwise clamp to +-theta/lr. Throws on non-positive lr.
void clip_gradients(GradientMap& grads, double lr, double theta);

class AdamState {
 public:
  AdamState(double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Bias-corrected Adam update of every parameter with a gradient.
  void step(WeightStore& params, const GradientMap& grads, double lr);
  long long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

// lr0 * 0.5^floor(epoch / halve_every).
double lr_schedule(int epoch, const TrainConfig& cfg);

struct TrainRecord {
  long long iter = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_iteration;
  // Fired at the end of every epoch and whenever the loss hits a new best.
  std::function<void(const WeightStore&, const TrainRecord&, bool best)>
      on_checkpoint;
};

struct TrainResult {
  std::vector<TrainRecord> trace;
  double best_loss = 0.0;
};

// sample -> forward -> L1 -> backward -> clip -> Adam, cfg.iterations times.
// Updates `net` in place. Throws NonFiniteError on a NaN/Inf loss.
TrainResult train_loop(Network& net, std::span<const ImagePlane> corpus,
                       const TrainConfig& cfg, const TrainHooks& hooks = {});

// `iter,epoch,lr,loss` header plus one row per record.
std::string loss_trace_csv(std::span<const TrainRecord> trace);

}  // namespace lffn

#endif  // LFFN_TRAIN_H_
