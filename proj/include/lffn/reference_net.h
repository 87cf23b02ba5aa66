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


// Float64 direct-loop evaluation of the whole network, written independently
// of the tape and the fast kernels. Used as the shadow model for
// finite-difference checks, where float32 rounding would swamp the signal.

#ifndef LFFN_REFERENCE_NET_H_
#define LFFN_REFERENCE_NET_H_

#include <map>
#include <string>
#include <vector>

#include "lffn/network.h"

namespace lffn::reference {

// NCHW float64 array.
struct Array {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Array() = default;
  Array(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}
  double& at(int i, int ch, int y, int x) {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  double at(int i, int ch, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
};

Array to_array(const Tensor& t);

class ShadowNetwork {
 public:
  ShadowNetwork(const NetworkSpec& spec, const WeightStore& weights);

  std::vector<double>& param(const std::string& name) { return params_.at(name); }
  const std::map<std::string, std::vector<double>>& params() const {
    return params_;
  }

  // `kinks`, when non-null, receives the sign of every prelu input in
  // evaluation order.
  Array forward(const Array& input, std::vector<bool>* kinks = nullptr) const;

 private:
  NetworkSpec spec_;
  std::map<std::string, std::vector<double>> params_;
};

}  // namespace lffn::reference

#endif  // LFFN_REFERENCE_NET_H_
