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

#include "lffn/imaging.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace lffn {
namespace {

constexpr double kLumaLo = 16.0 / 255.0;
constexpr double kLumaHi = 235.0 / 255.0;

struct Range {
  float lo, hi;
};

Range range_of(ColorSpace s) {
  if (s == ColorSpace::kLuma) {
    return {static_cast<float>(kLumaLo), static_cast<float>(kLumaHi)};
  }
  return {0.0f, 1.0f};
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Everything mutated between setjmp and a libpng longjmp lives here, behind a
// pointer that is itself never reassigned.
struct PngReadState {
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0, channels = 0;
  std::string error;
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* state = static_cast<std::string*>(png_get_error_ptr(png));
  if (state) *state = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

// Cropped sample planes of two equally sized single-channel images.
struct CroppedPair {
  int w, h;
  std::vector<double> a, b;
};

CroppedPair crop_pair(const ImagePlane& sr, const ImagePlane& hr, int border,
                      const char* metric) {
  if (sr.width() != hr.width() || sr.height() != hr.height()) {
    throw ImageError(std::string(metric) + ": extent mismatch " +
                     std::to_string(sr.width()) + "x" +
                     std::to_string(sr.height()) + " vs " +
                     std::to_string(hr.width()) + "x" +
                     std::to_string(hr.height()));
  }
  if (sr.channels() != 1 || hr.channels() != 1) {
    throw ImageError(std::string(metric) + " expects single-channel Y images");
  }
  if (border < 0) throw ImageError(std::string(metric) + ": negative border");
  CroppedPair p;
  p.w = sr.width() - 2 * border;
  p.h = sr.height() - 2 * border;
  if (p.w < 1 || p.h < 1) {
    throw ImageError(std::string(metric) + ": border crop leaves no pixels");
  }
  p.a.resize(static_cast<std::size_t>(p.w) * p.h);
  p.b.resize(p.a.size());
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < p.w; ++x) {
      p.a[static_cast<std::size_t>(y) * p.w + x] = sr.at(0, y + border, x + border);
      p.b[static_cast<std::size_t>(y) * p.w + x] = hr.at(0, y + border, x + border);
    }
  }
  return p;
}

// Contribution weights of one output sample along one axis.
struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
};

std::vector<Taps> resize_taps(int in, int out) {
  const double scale = static_cast<double>(out) / in;
  const bool shrink = scale < 1.0;
  const double width = shrink ? 4.0 / scale : 4.0;
  std::vector<Taps> taps(out);
  for (int i = 0; i < out; ++i) {
    // 1-based source coordinate of output sample i+1.
    const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    const int count = static_cast<int>(std::ceil(width)) + 2;
    Taps& t = taps[i];
    double total = 0.0;
    for (int k = 0; k < count; ++k) {
      const int j = left + k;
      const double d = u - j;
      const double w = shrink ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      if (w == 0.0) continue;
      t.index.push_back(std::clamp(j, 1, in) - 1);
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return taps;
}

}  // namespace

ImagePlane::ImagePlane(int width, int height, int channels, ColorSpace space)
    : width_(width), height_(height), channels_(channels), space_(space) {
  if (width < 1 || height < 1) throw ImageError("image extents must be >= 1");
  if (channels != 1 && channels != 3) {
    throw ImageError("image must have 1 or 3 channels");
  }
  if ((space == ColorSpace::kRgb) != (channels == 3)) {
    throw ImageError("colour space does not match channel count");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels,
               range_of(space).lo);
}

float ImagePlane::min_value() const {
  return *std::min_element(data_.begin(), data_.end());
}

float ImagePlane::max_value() const {
  return *std::max_element(data_.begin(), data_.end());
}

void ImagePlane::clamp() {
  const Range r = range_of(space_);
  for (float& v : data_) v = std::clamp(v, r.lo, r.hi);
}

ImagePlane load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageError(path.string() + " is not a PNG file");
  }
  auto state = std::make_unique<PngReadState>();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state->error,
                                           png_error_handler, png_warning_handler);
  if (!png) throw ImageError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": " + state->error);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  state->bit_depth = png_get_bit_depth(png, info);
  state->color_type = png_get_color_type(png, info);
  if (state->bit_depth != 8 && state->bit_depth != 16) {
    state->error = "unsupported bit depth " + std::to_string(state->bit_depth);
  } else if (state->color_type & PNG_COLOR_MASK_PALETTE) {
    state->error = "palette images are not supported";
  }
  if (!state->error.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": " + state->error);
  }
  if (state->color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  state->width = png_get_image_width(png, info);
  state->height = png_get_image_height(png, info);
  state->channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  state->pixels.resize(stride * state->height);
  state->rows.resize(state->height);
  for (png_uint_32 y = 0; y < state->height; ++y) {
    state->rows[y] = state->pixels.data() + y * stride;
  }
  png_read_image(png, state->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int ch = state->channels;
  const bool wide = state->bit_depth == 16;
  ImagePlane img(static_cast<int>(state->width), static_cast<int>(state->height),
                 ch == 3 ? 3 : 1, ch == 3 ? ColorSpace::kRgb : ColorSpace::kGray);
  for (int y = 0; y < img.height(); ++y) {
    const png_byte* row = state->rows[y];
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * ch + c;
        img.at(c, y, x) =
            wide ? static_cast<float>((row[2 * k] << 8 | row[2 * k + 1]) / 65535.0)
                 : static_cast<float>(row[k] / 255.0);
      }
    }
  }
  return img;
}

void save_png(const ImagePlane& img, const std::filesystem::path& path) {
  if (img.empty()) throw ImageError("cannot save an empty image");
  const int ch = img.channels();
  const std::size_t stride = static_cast<std::size_t>(img.width()) * ch;
  auto pixels = std::make_unique<std::vector<png_byte>>(stride * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        (*pixels)[y * stride + static_cast<std::size_t>(x) * ch + c] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageError("cannot write " + path.string());
  auto error = std::make_unique<std::string>();
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, error.get(),
                                            png_error_handler, png_warning_handler);
  if (!png) throw ImageError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError(path.string() + ": " + *error);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8,
               ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(png, pixels->data() + y * stride);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImagePlane rgb_to_ycbcr_y(const ImagePlane& rgb) {
  if (rgb.channels() != 3) {
    throw ImageError("rgb_to_ycbcr_y expects 3 channels, got " +
                     std::to_string(rgb.channels()));
  }
  ImagePlane y(rgb.width(), rgb.height(), 1, ColorSpace::kLuma);
  for (int r = 0; r < rgb.height(); ++r) {
    for (int c = 0; c < rgb.width(); ++c) {
      const double v = (16.0 + 65.481 * rgb.at(0, r, c) +
                        128.553 * rgb.at(1, r, c) + 24.966 * rgb.at(2, r, c)) /
                       255.0;
      y.at(0, r, c) = static_cast<float>(v);
    }
  }
  y.clamp();
  return y;
}

ImagePlane quantize_8bit(const ImagePlane& img) {
  ImagePlane out = img;
  for (float& v : out.data()) {
    v = static_cast<float>(std::round(static_cast<double>(v) * 255.0) / 255.0);
  }
  out.clamp();
  return out;
}

ImagePlane crop(const ImagePlane& img, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || width < 1 || height < 1 || x + width > img.width() ||
      y + height > img.height()) {
    throw ImageError("crop window outside image");
  }
  ImagePlane out(width, height, img.channels(), img.color_space());
  for (int c = 0; c < img.channels(); ++c) {
    for (int r = 0; r < height; ++r) {
      for (int q = 0; q < width; ++q) out.at(c, r, q) = img.at(c, y + r, x + q);
    }
  }
  return out;
}

ImagePlane mod_crop(const ImagePlane& img, int scale) {
  const int w = img.width() - img.width() % scale;
  const int h = img.height() - img.height() % scale;
  if (w < 1 || h < 1) throw ImageError("image smaller than the scale factor");
  return crop(img, 0, 0, w, h);
}

double cubic_kernel(double x) {
  const double a = std::fabs(x);
  const double a2 = a * a;
  const double a3 = a2 * a;
  if (a <= 1.0) return 1.5 * a3 - 2.5 * a2 + 1.0;
  if (a < 2.0) return -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0;
  return 0.0;
}

ImagePlane bicubic_resize_to(const ImagePlane& img, int out_width,
                             int out_height) {
  if (out_width < 1 || out_height < 1) {
    throw ImageError("bicubic_resize: zero target size");
  }
  const std::vector<Taps> tx = resize_taps(img.width(), out_width);
  const std::vector<Taps> ty = resize_taps(img.height(), out_height);
  // Rows first, then columns, accumulating in double.
  std::vector<double> tmp(static_cast<std::size_t>(img.height()) * out_width);
  ImagePlane out(out_width, out_height, img.channels(), img.color_space());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tx[x].index.size(); ++k) {
          acc += tx[x].weight[k] * img.at(c, y, tx[x].index[k]);
        }
        tmp[static_cast<std::size_t>(y) * out_width + x] = acc;
      }
    }
    for (int y = 0; y < out_height; ++y) {
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < ty[y].index.size(); ++k) {
          acc += ty[y].weight[k] *
                 tmp[static_cast<std::size_t>(ty[y].index[k]) * out_width + x];
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  out.clamp();
  return out;
}

ImagePlane bicubic_resize(const ImagePlane& img, int scale_num, int scale_den) {
  if (scale_num < 1 || scale_den < 1) {
    throw ImageError("bicubic_resize: scale must be positive");
  }
  const auto extent = [&](int n) {
    return static_cast<int>((static_cast<long long>(n) * scale_num + scale_den - 1) /
                            scale_den);
  };
  return bicubic_resize_to(img, extent(img.width()), extent(img.height()));
}

double psnr_y(const ImagePlane& sr, const ImagePlane& hr, int border) {
  const CroppedPair p = crop_pair(sr, hr, border, "psnr_y");
  double se = 0.0;
  for (std::size_t i = 0; i < p.a.size(); ++i) {
    const double d = p.a[i] - p.b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(p.a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim_y(const ImagePlane& sr, const ImagePlane& hr, int border) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const CroppedPair p = crop_pair(sr, hr, border, "ssim_y");
  if (p.w < kWin || p.h < kWin) {
    throw ImageError("ssim_y: image smaller than the 11x11 window");
  }
  double g[kWin];
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  const int ow = p.w - kWin + 1;
  const int oh = p.h - kWin + 1;
  // Separable valid-mode filtering of x, y, x^2, y^2, xy.
  auto filter = [&](auto&& sample) {
    std::vector<double> rows(static_cast<std::size_t>(p.h) * ow);
    for (int y = 0; y < p.h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < kWin; ++k) {
          acc += g[k] * sample(static_cast<std::size_t>(y) * p.w + x + k);
        }
        rows[static_cast<std::size_t>(y) * ow + x] = acc;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < kWin; ++k) {
          acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
        }
        out[static_cast<std::size_t>(y) * ow + x] = acc;
      }
    }
    return out;
  };
  const auto& a = p.a;
  const auto& b = p.b;
  const auto mu_a = filter([&](std::size_t i) { return a[i]; });
  const auto mu_b = filter([&](std::size_t i) { return b[i]; });
  const auto aa = filter([&](std::size_t i) { return a[i] * a[i]; });
  const auto bb = filter([&](std::size_t i) { return b[i] * b[i]; });
  const auto ab = filter([&](std::size_t i) { return a[i] * b[i]; });
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = aa[i] - mu_a[i] * mu_a[i];
    const double vb = bb[i] - mu_b[i] * mu_b[i];
    const double cov = ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

Tensor to_tensor(const ImagePlane& img) {
  Tensor t = Tensor::nchw(1, img.channels(), img.height(), img.width());
  std::copy(img.data().begin(), img.data().end(), t.ptr());
  return t;
}

ImagePlane from_tensor(const Tensor& t, int index, ColorSpace space) {
  const Shape& s = t.shape();
  if (s.rank() != 4 || index < 0 || index >= s.n()) {
    throw ImageError("from_tensor: bad tensor or sample index");
  }
  ImagePlane img(s.w(), s.h(), s.c(), space);
  const std::size_t count = static_cast<std::size_t>(s.c()) * s.h() * s.w();
  std::copy(t.ptr() + index * count, t.ptr() + (index + 1) * count,
            img.data().begin());
  img.clamp();
  return img;
}

nlohmann::json to_json(const MetricRecord& r) {
  nlohmann::json j;
  j["image"] = r.image;
  j["scale"] = r.scale;
  if (std::isinf(r.psnr_db)) {
    j["psnr_db"] = "inf";
  } else {
    j["psnr_db"] = r.psnr_db;
  }
  j["ssim"] = r.ssim;
  return j;
}

}  // namespace lffn
