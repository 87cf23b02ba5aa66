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

#ifndef LFFN_IMAGING_H_
#define LFFN_IMAGING_H_

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "lffn/tensor.h"
#include "json.hpp"

namespace lffn {

enum class ColorSpace {
  kRgb,   // [0, 1]
  kGray,  // [0, 1]
  kLuma,  // BT.601 studio-swing Y', [16/255, 235/255]
};

// Planar float image (channel, row, column).
class ImagePlane {
 public:
  ImagePlane() = default;
  ImagePlane(int width, int height, int channels, ColorSpace space);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  ColorSpace color_space() const { return space_; }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  float at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  float min_value() const;
  float max_value() const;
  // Clamps every sample to the range of the colour space.
  void clamp();

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  ColorSpace space_ = ColorSpace::kRgb;
  std::vector<float> data_;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8- or 16-bit gray/RGB PNG (alpha dropped), scaled to [0, 1].
ImagePlane load_png(const std::filesystem::path& path);
// Writes 8-bit gray or RGB. Samples are clamped, then rounded to v*255.
void save_png(const ImagePlane& img, const std::filesystem::path& path);

ImagePlane rgb_to_ycbcr_y(const ImagePlane& rgb);

// Rounds every sample to the nearest multiple of 1/255.
ImagePlane quantize_8bit(const ImagePlane& img);

// Crops to the top-left region whose extents are multiples of `scale`.
ImagePlane mod_crop(const ImagePlane& img, int scale);
ImagePlane crop(const ImagePlane& img, int x, int y, int width, int height);

// Keys cubic (a = -0.5). Downscaling widens the kernel by the inverse scale
// (antialiasing); edge samples are clamped.
double cubic_kernel(double x);
ImagePlane bicubic_resize_to(const ImagePlane& img, int out_width,
                             int out_height);
// Scales by num/den, output extents ceil(in * num / den).
ImagePlane bicubic_resize(const ImagePlane& img, int scale_num, int scale_den);

// PSNR in dB on [0,1] data after cropping `border` pixels per side.
// Returns +infinity for identical inputs.
double psnr_y(const ImagePlane& sr, const ImagePlane& hr, int border);
// Mean SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1.
double ssim_y(const ImagePlane& sr, const ImagePlane& hr, int border);

Tensor to_tensor(const ImagePlane& img);
ImagePlane from_tensor(const Tensor& t, int index = 0,
                       ColorSpace space = ColorSpace::kRgb);

struct MetricRecord {
  std::string image;
  int scale = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

// {image, scale, psnr_db, ssim}; an infinite PSNR is written as "inf".
nlohmann::json to_json(const MetricRecord& r);

}  // namespace lffn

#endif  // LFFN_IMAGING_H_
