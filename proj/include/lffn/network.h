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

// LFFN topology: spindle blocks grouped into local feature fusion modules,
// softmax feature fusion across module outputs, and a pixel-shuffle
// reconstruction tail.
//
//   M_0 = head(I_lr)                         3x3 conv, 3 -> 48
//   M_d = fuse_d([B_d1 .. B_dB]) + M_{d-1}   B spindle blocks, 1x1 fusion
//   R   = sffm(M_1 .. M_M)                   per-channel convex weights
//   I_sr = tail(up(fuse(R) + M_0))           1x1 convs around pixel shuffle
//
// Every learnable tensor is addressed by a dotted name, e.g.
// `module.3.block.1.explore.branch2.conv0.weight`.

#ifndef LFFN_NETWORK_H_
#define LFFN_NETWORK_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lffn/kernels.h"
#include "lffn/tape.h"
#include "lffn/tensor.h"

namespace lffn {

enum class Variant {
  kFull,              // spindle blocks + SFFM
  kNoSffm,            // LFFN-NF: last module output feeds the tail directly
  kResidualBaseline,  // LFFN-NS: plain residual blocks at width 64
};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct NetworkSpec {
  int blocks = 4;    // B, spindle blocks per module
  int modules = 15;  // M
  int scale = 4;
  bool depthwise = false;
  Variant variant = Variant::kFull;
  int backbone_channels = 48;
  int extended_channels = 64;
  int group_width = 16;

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;
  std::string label() const;

  // `lffn`, `lffn-s`, `lffn-nf` or `lffn-ns`.
  static NetworkSpec preset(std::string_view name, int scale);
};

enum class LayerKind { kConv, kPrelu, kDense };

// One parametrised layer of the graph, with where it runs. `resolution` is
// the spatial multiple of the LR grid.
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  ConvSpec conv;         // kConv
  int channels = 0;      // kPrelu: slope count; kDense: input width
  int out_channels = 0;  // kDense
  int resolution = 1;

  struct Param {
    std::string name;
    Shape shape;
  };
  std::vector<Param> params() const;
};

void append_spindle_block_layers(std::vector<LayerDesc>& out,
                                 const std::string& prefix,
                                 const NetworkSpec& spec);
void append_residual_block_layers(std::vector<LayerDesc>& out,
                                  const std::string& prefix, int width);
void append_module_layers(std::vector<LayerDesc>& out,
                          const std::string& prefix, const NetworkSpec& spec);
void append_upsampler_layers(std::vector<LayerDesc>& out, int channels,
                             int scale);
std::vector<LayerDesc> describe_network(const NetworkSpec& spec);

// Learnable tensors in graph order.
class WeightStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value);
  // Throws std::out_of_range for unknown names.
  void remove(const std::string& name);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  const std::vector<Entry>& entries() const { return entries_; }
  // Values are mutable; the entry list is not, so the index stays valid.
  std::span<Entry> entries() { return entries_; }

  friend bool operator==(const WeightStore& a, const WeightStore& b);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Zero-filled tensors for every parameter of `layers`.
WeightStore make_weight_store(const std::vector<LayerDesc>& layers);

// He-normal conv and dense weights (variance 2/fan_in), zero biases, PReLU
// slopes 0.25. Deterministic per seed.
void init_weights(WeightStore& store, std::uint64_t seed);

// Resolves parameter names to tape nodes, as trainable leaves or constants.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const WeightStore& store, bool trainable)
      : tape_(tape), store_(store), trainable_(trainable) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const WeightStore& store_;
  bool trainable_;
  std::unordered_map<std::string, Var> constants_;
};

Var conv_layer(ParamBinder& p, const std::string& name, Var x,
               const ConvSpec& spec);

Var spindle_block(ParamBinder& p, const std::string& prefix, Var x,
                  const NetworkSpec& spec);
Var residual_block(ParamBinder& p, const std::string& prefix, Var x, int width);
Var fusion_module(ParamBinder& p, const std::string& prefix, Var x,
                  const NetworkSpec& spec);

// Softmax feature fusion. `alphas[i]` is the CxC dense weight of level i.
// When non-null, `level_weights` receives the per-level (N,C,1,1) weights.
Var sffm_forward(Tape& t, std::span<const Var> levels,
                 std::span<const Var> alphas,
                 std::vector<Tensor>* level_weights = nullptr);

Var upsampler(ParamBinder& p, Var x, int channels, int scale);

class Network {
 public:
  // Validates that `weights` holds exactly the tensors `spec` describes.
  Network(NetworkSpec spec, WeightStore weights);

  // Freshly initialised network.
  static Network create(const NetworkSpec& spec, std::uint64_t seed);

  // Spec recovered from parameter names and shapes.
  static NetworkSpec infer_spec(const WeightStore& weights);

  const NetworkSpec& spec() const { return spec_; }
  const WeightStore& weights() const { return weights_; }
  WeightStore& weights() { return weights_; }

  // Records the forward graph on `binder`'s tape. `sffm_weights` receives
  // the per-level fusion weights when non-null.
  Var forward(ParamBinder& binder, Var input,
              std::vector<Tensor>* sffm_weights = nullptr) const;

  // Inference without gradients. `input` is (N,3,H,W) RGB in [0,1].
  Tensor infer(const Tensor& input,
               std::vector<Tensor>* sffm_weights = nullptr) const;

 private:
  NetworkSpec spec_;
  WeightStore weights_;
};

}  // namespace lffn

#endif  // LFFN_NETWORK_H_
