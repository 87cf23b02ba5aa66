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

#ifndef LFFN_PARALLEL_H_
#define LFFN_PARALLEL_H_

namespace lffn {

// Worker count used by the OpenMP kernels. Kernels split work only across
// independent outputs, so results are bit-identical for any count.
int num_threads();
void set_num_threads(int n);

// Applies the LFFN_THREADS environment cap, if set. Returns the count in use.
int configure_threads_from_env();

}  // namespace lffn

#endif  // LFFN_PARALLEL_H_
