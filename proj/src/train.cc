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

#include "lffn/train.h"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lffn {

void TrainConfig::validate() const {
  if (batch < 1 || lr_patch < 1 || halve_every < 1 || iters_per_epoch < 1 ||
      iterations < 0) {
    throw std::invalid_argument("train config: counts must be positive");
  }
  if (!(lr0 > 0.0) || !(clip_theta > 0.0) || !(eps > 0.0)) {
    throw std::invalid_argument("train config: rates must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  }
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.batch = j.value("batch", c.batch);
  c.lr_patch = j.value("lr_patch", c.lr_patch);
  c.lr0 = j.value("lr0", c.lr0);
  c.halve_every = j.value("halve_every", c.halve_every);
  c.iters_per_epoch = j.value("iters_per_epoch", c.iters_per_epoch);
  c.iterations = j.value("iterations", c.iterations);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.clip_theta = j.value("clip_theta", c.clip_theta);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch", c.batch},
          {"lr_patch", c.lr_patch},
          {"lr0", c.lr0},
          {"halve_every", c.halve_every},
          {"iters_per_epoch", c.iters_per_epoch},
          {"iterations", c.iterations},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"clip_theta", c.clip_theta},
          {"seed", c.seed}};
}

ImagePlane apply_augmentation(const ImagePlane& img, Augmentation aug) {
  ImagePlane cur = img;
  for (int r = 0; r < (aug.rotation % 4 + 4) % 4; ++r) {
    // Quarter turn counter-clockwise: (x, y) -> (y, W-1-x).
    ImagePlane next(cur.height(), cur.width(), cur.channels(), cur.color_space());
    for (int c = 0; c < cur.channels(); ++c) {
      for (int y = 0; y < cur.height(); ++y) {
        for (int x = 0; x < cur.width(); ++x) {
          next.at(c, cur.width() - 1 - x, y) = cur.at(c, y, x);
        }
      }
    }
    cur = std::move(next);
  }
  if (aug.flip) {
    ImagePlane next = cur;
    for (int c = 0; c < cur.channels(); ++c) {
      for (int y = 0; y < cur.height(); ++y) {
        for (int x = 0; x < cur.width(); ++x) {
          next.at(c, y, cur.width() - 1 - x) = cur.at(c, y, x);
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

Batch sample_batch(std::span<const ImagePlane> corpus, int scale,
                   const TrainConfig& cfg, Rng& rng) {
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  const int lp = cfg.lr_patch;
  const int hp = lp * scale;
  Batch batch;
  batch.lr = Tensor::nchw(cfg.batch, 3, lp, lp);
  batch.hr = Tensor::nchw(cfg.batch, 3, hp, hp);
  std::uniform_int_distribution<std::size_t> pick_image(0, corpus.size() - 1);
  std::uniform_int_distribution<int> pick_aug(0, 7);
  const std::size_t lr_count = static_cast<std::size_t>(3) * lp * lp;
  const std::size_t hr_count = static_cast<std::size_t>(3) * hp * hp;
  for (int i = 0; i < cfg.batch; ++i) {
    const std::size_t idx = pick_image(rng);
    const ImagePlane& img = corpus[idx];
    if (img.channels() != 3) {
      throw ImageError("training image " + std::to_string(idx) + " is not RGB");
    }
    if (img.width() < hp || img.height() < hp) {
      throw ImageError("training image " + std::to_string(idx) + " (" +
                       std::to_string(img.width()) + "x" +
                       std::to_string(img.height()) +
                       ") is smaller than the HR patch " + std::to_string(hp));
    }
    const Augmentation aug = Augmentation::from_index(pick_aug(rng));
    std::uniform_int_distribution<int> pick_x(0, img.width() - hp);
    std::uniform_int_distribution<int> pick_y(0, img.height() - hp);
    const int x = pick_x(rng);
    const int y = pick_y(rng);
    const ImagePlane hr = apply_augmentation(crop(img, x, y, hp, hp), aug);
    const ImagePlane lr = bicubic_resize_to(hr, lp, lp);
    std::copy(hr.data().begin(), hr.data().end(), batch.hr.ptr() + i * hr_count);
    std::copy(lr.data().begin(), lr.data().end(), batch.lr.ptr() + i * lr_count);
    batch.augmentations.push_back(aug);
  }
  return batch;
}

void clip_gradients(GradientMap& grads, double lr, double theta) {
  if (!(lr > 0.0)) throw std::invalid_argument("clip_gradients: lr must be > 0");
  const float bound = static_cast<float>(theta / lr);
  for (auto& [name, g] : grads) {
    for (float& v : g.data()) v = std::clamp(v, -bound, bound);
  }
}

void AdamState::step(WeightStore& params, const GradientMap& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.get(name);
    if (!(p.shape() == g.shape())) {
      throw ShapeError("adam: gradient shape mismatch for '" + name + "'");
    }
    auto [it, inserted] =
        moments_.try_emplace(name, Tensor(p.shape()), Tensor(p.shape()));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    if (!(m.shape() == p.shape())) {
      throw ShapeError("adam: state shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps_);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  return cfg.lr0 * std::pow(0.5, epoch / cfg.halve_every);
}

TrainResult train_loop(Network& net, std::span<const ImagePlane> corpus,
                       const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  const long long total = cfg.iterations > 0 ? cfg.iterations : cfg.iters_per_epoch;
  Rng rng(cfg.seed);
  AdamState adam(cfg.beta1, cfg.beta2, cfg.eps);
  TrainResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  for (long long it = 0; it < total; ++it) {
    TrainRecord rec;
    rec.iter = it;
    rec.epoch = static_cast<int>(it / cfg.iters_per_epoch);
    rec.lr = lr_schedule(rec.epoch, cfg);

    const Batch batch = sample_batch(corpus, net.spec().scale, cfg, rng);
    Tape tape;
    ParamBinder binder(tape, net.weights(), /*trainable=*/true);
    Var loss;
    try {
      Var out = net.forward(binder, tape.constant(batch.lr));
      loss = l1_loss(tape, out, batch.hr);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("iteration " + std::to_string(it) + ": " + e.what());
    }
    rec.loss = tape.value(loss)[0];
    GradientMap grads = tape.backward(loss);
    clip_gradients(grads, rec.lr, cfg.clip_theta);
    adam.step(net.weights(), grads, rec.lr);

    result.trace.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    const bool best = rec.loss < result.best_loss;
    if (best) result.best_loss = rec.loss;
    const bool epoch_end = (it + 1) % cfg.iters_per_epoch == 0;
    if (hooks.on_checkpoint && (best || epoch_end)) {
      hooks.on_checkpoint(net.weights(), rec, best);
    }
  }
  return result;
}

std::string loss_trace_csv(std::span<const TrainRecord> trace) {
  std::ostringstream os;
  os << "iter,epoch,lr,loss\n";
  char buf[96];
  for (const TrainRecord& r : trace) {
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g,%.9g\n", r.iter, r.epoch,
                  r.lr, r.loss);
    os << buf;
  }
  return os.str();
}

}  // namespace lffn
