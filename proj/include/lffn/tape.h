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

#ifndef LFFN_TAPE_H_
#define LFFN_TAPE_H_

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lffn/kernels.h"
#include "lffn/tensor.h"

namespace lffn {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

using GradientMap = std::map<std::string, Tensor>;

// Wengert list for reverse-mode differentiation. Nodes are appended in
// execution order and replayed in reverse by backward().
//
// One tape records one forward pass. Not thread-safe; independent tapes may
// be used from different threads.
class Tape {
 public:
  // `grad_in[i]` is a zero-initialised buffer for input i, or null when that
  // input does not require a gradient.
  using BackwardFn = std::function<void(const Tape& tape, const Tensor& grad_out,
                                        std::span<Tensor* const> grad_in)>;

  Var constant(Tensor value);
  // Leaf that receives a gradient; `name` keys it in the returned map.
  Var leaf(Tensor value, std::string name = {});
  // Named learnable parameter. Binding the same name twice returns the same
  // node so each parameter owns exactly one gradient buffer.
  Var parameter(const std::string& name, const Tensor& value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward,
             const char* op_name);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  // Op that produced `v` ("" for constants and leaves) and its inputs.
  const char* op_name(Var v) const { return nodes_.at(v.id).op; }
  std::span<const int> inputs(Var v) const { return nodes_.at(v.id).inputs; }

  // Reverse sweep from a scalar loss. Returns gradients of named leaves.
  // Throws std::logic_error if the tape was already consumed.
  GradientMap backward(Var loss);

  // Gradient of any node after backward(); null if none flowed there.
  const Tensor* grad(Var v) const;

  const std::map<std::string, Var>& parameters() const { return params_; }

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string name;
    const char* op = "";
  };

  // A deque keeps value references valid while ops record new nodes.
  std::deque<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
  std::map<std::string, Var> params_;
  bool consumed_ = false;
};

// Differentiable ops. All check shapes and reject non-finite results.
Var conv2d(Tape& t, Var x, Var w, std::optional<Var> b, const ConvSpec& spec);
// x: (N,C,1,1) or rank-2 (N,C); w: (C_out, C). Output (N,C_out,1,1).
Var dense(Tape& t, Var x, Var w, std::optional<Var> b = std::nullopt);
Var prelu(Tape& t, Var x, Var alpha);
Var global_avg_pool(Tape& t, Var x);
Var pixel_shuffle(Tape& t, Var x, int r);
Var concat_channels(Tape& t, std::span<const Var> xs);

struct ChannelRange {
  int begin = 0;
  int end = 0;
};
std::vector<Var> slice_channels(Tape& t, Var x,
                                std::span<const ChannelRange> ranges);

Var add(Tape& t, Var x, Var y);
// x: (N,C,H,W), w: (N,C,1,1); multiplies each channel by its weight.
Var scale_channels(Tape& t, Var x, Var w);
// Softmax taken across the list at every (n, c) position; all inputs share
// one shape and the outputs mirror it.
std::vector<Var> softmax_across(Tape& t, std::span<const Var> logits);

Var sum(Tape& t, Var x);
// Scalar sum(x * weights) with constant weights.
Var weighted_sum(Tape& t, Var x, const Tensor& weights);
// Mean absolute difference against a constant target.
Var l1_loss(Tape& t, Var pred, const Tensor& target);

}  // namespace lffn

#endif  // LFFN_TAPE_H_
