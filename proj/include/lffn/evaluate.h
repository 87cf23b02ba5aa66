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


// Evaluation pipeline: degradation, super-resolution of whole images,
// Y-channel metrics and per-directory reports.

#ifndef LFFN_EVALUATE_H_
#define LFFN_EVALUATE_H_

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lffn/imaging.h"
#include "lffn/network.h"
#include "json.hpp"

namespace lffn {

// Gray images replicated to three channels; RGB passes through.
ImagePlane to_rgb(const ImagePlane& img);

// Bicubic downscale by `scale` after cropping to a multiple of it.
ImagePlane degrade(const ImagePlane& hr, int scale);

// Network output clamped to [0, 1] and quantized to 8 bits.
ImagePlane super_resolve(const Network& net, const ImagePlane& lr);

// Y-channel PSNR/SSIM of 8-bit quantized `sr` against `hr`, border = scale.
MetricRecord measure(const std::string& image, const ImagePlane& sr,
                     const ImagePlane& hr, int scale);

// Maps an LR image to its SR estimate. `hr` is only there for test hooks
// such as identity_backend(); real backends ignore it.
using SrBackend =
    std::function<ImagePlane(const ImagePlane& lr, const ImagePlane& hr)>;

SrBackend network_backend(const Network& net);
// Returns the ground truth unchanged.
SrBackend identity_backend();

struct EvalFailure {
  std::string image;
  std::string error;
};

struct EvalReport {
  int scale = 0;
  std::vector<MetricRecord> sr;       // sorted by image name
  std::vector<MetricRecord> bicubic;  // same order
  MetricRecord sr_average;
  MetricRecord bicubic_average;
  std::vector<EvalFailure> failures;

  nlohmann::json to_json() const;
};

// Arithmetic mean of the rows, labelled `average`.
MetricRecord average(const std::vector<MetricRecord>& rows, int scale);

// Images are processed in name order; a failing image is recorded and
// skipped.
EvalReport evaluate_images(
    std::vector<std::pair<std::string, ImagePlane>> hr_images, int scale,
    const SrBackend& backend);
EvalReport evaluate_directory(const std::filesystem::path& dir, int scale,
                              const SrBackend& backend);

// Regular *.png files of `dir`, sorted by name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

// All PNGs of `dir` as RGB. Errors name the offending file.
std::vector<ImagePlane> load_corpus(const std::filesystem::path& dir);

}  // namespace lffn

#endif  // LFFN_EVALUATE_H_
