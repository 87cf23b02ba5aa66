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

#include "lffn/tape.h"

#include <stdexcept>

namespace lffn {

Var Tape::constant(Tensor value) {
  check_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, std::string name) {
  check_finite(value, "leaf");
  nodes_.push_back(Node{std::move(value), {}, nullptr, true, std::move(name)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) return it->second;
  Var v = leaf(value, name);
  params_.emplace(name, v);
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward,
                 const char* op_name) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  check_finite(value, op_name);
  Node node;
  node.value = std::move(value);
  node.op = op_name;
  for (Var in : inputs) {
    if (in.id < 0 || in.id >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument(std::string(op_name) +
                                  ": input is not on this tape");
    }
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

GradientMap Tape::backward(Var loss) {
  if (consumed_) {
    throw std::logic_error("tape consumed twice; re-run the forward pass");
  }
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     lv.shape().str());
  }
  consumed_ = true;
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss.id] = Tensor(lv.shape(), 1.0f);

  std::vector<Tensor*> grad_in;
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.backward || !grads_[id]) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const int in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!grads_[in]) grads_[in] = Tensor(nodes_[in].value.shape());
      grad_in[i] = &*grads_[in];
    }
    node.backward(*this, *grads_[id], grad_in);
    for (Tensor* g : grad_in) {
      if (g) check_finite(*g, "backward");
    }
    // Interior gradients are dead once propagated.
    if (!node.inputs.empty()) grads_[id].reset();
  }

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || !node.inputs.empty() || node.name.empty()) {
      continue;
    }
    out.emplace(node.name,
                grads_[id] ? *grads_[id] : Tensor(node.value.shape()));
  }
  return out;
}

const Tensor* Tape::grad(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(grads_.size())) return nullptr;
  return grads_[v.id] ? &*grads_[v.id] : nullptr;
}

}  // namespace lffn
