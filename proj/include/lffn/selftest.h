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


// Built-in correctness checks behind `lffn selftest`: finite-difference
// gradient checks of every op and of the composed blocks, and comparisons of
// the parallel kernels against the serial reference loops.

#ifndef LFFN_SELFTEST_H_
#define LFFN_SELFTEST_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lffn/network.h"
#include "lffn/tape.h"

namespace lffn {

struct GradCheckOptions {
  double step = 1e-2;
  double tolerance = 1e-3;
  // Coordinates probed per input tensor; 0 probes all of them.
  int max_coords = 0;
  std::uint64_t seed = 1;
};

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

// Graph under test, recorded on `tape` from one Var per input tensor.
using GraphFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

// Compares tape gradients of sum(r * graph(inputs)), r a fixed random
// projection, against central differences. The error is the worst
// relative vector error ||fd - g|| / max(||fd||, ||g||) over the inputs.
CheckResult gradient_check(const std::string& name, const GraphFn& graph,
                           std::vector<Tensor> inputs,
                           const GradCheckOptions& options);

// Same, over the parameters of `store` as bound by `graph`.
CheckResult gradient_check_weights(
    const std::string& name, WeightStore store,
    const std::function<Var(ParamBinder&)>& graph,
    const GradCheckOptions& options);

// Tape gradients of the network's weights against central differences of
// the float64 shadow model, in which rounding noise is negligible.
CheckResult shadow_gradient_check(const std::string& name, const Network& net,
                                  const Tensor& input,
                                  const GradCheckOptions& options);

// Runs the whole suite. `progress`, when set, sees each result as it lands.
std::vector<CheckResult> run_selftest(
    const std::function<void(const CheckResult&)>& progress = {});

}  // namespace lffn

#endif  // LFFN_SELFTEST_H_
