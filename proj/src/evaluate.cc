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


#include "lffn/evaluate.h"

#include <algorithm>
#include <cmath>

namespace lffn {

ImagePlane to_rgb(const ImagePlane& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) {
    throw ImageError("expected a gray or RGB image, got " +
                     std::to_string(img.channels()) + " channels");
  }
  ImagePlane out(img.width(), img.height(), 3, ColorSpace::kRgb);
  for (int c = 0; c < 3; ++c) {
    std::copy(img.data().begin(), img.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(c) * img.data().size());
  }
  return out;
}

ImagePlane degrade(const ImagePlane& hr, int scale) {
  const ImagePlane cropped = mod_crop(hr, scale);
  return bicubic_resize_to(cropped, cropped.width() / scale,
                           cropped.height() / scale);
}

ImagePlane super_resolve(const Network& net, const ImagePlane& lr) {
  const ImagePlane rgb = to_rgb(lr);
  return quantize_8bit(from_tensor(net.infer(to_tensor(rgb))));
}

MetricRecord measure(const std::string& image, const ImagePlane& sr,
                     const ImagePlane& hr, int scale) {
  const ImagePlane y_sr = rgb_to_ycbcr_y(quantize_8bit(to_rgb(sr)));
  const ImagePlane y_hr = rgb_to_ycbcr_y(to_rgb(hr));
  return {image, scale, psnr_y(y_sr, y_hr, scale), ssim_y(y_sr, y_hr, scale)};
}

SrBackend network_backend(const Network& net) {
  return [&net](const ImagePlane& lr, const ImagePlane&) {
    return super_resolve(net, lr);
  };
}

SrBackend identity_backend() {
  return [](const ImagePlane&, const ImagePlane& hr) { return hr; };
}

MetricRecord average(const std::vector<MetricRecord>& rows, int scale) {
  MetricRecord avg{"average", scale, 0.0, 0.0};
  if (rows.empty()) return avg;
  for (const MetricRecord& r : rows) {
    avg.psnr_db += r.psnr_db;
    avg.ssim += r.ssim;
  }
  avg.psnr_db /= static_cast<double>(rows.size());
  avg.ssim /= static_cast<double>(rows.size());
  return avg;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["scale"] = scale;
  j["images"] = nlohmann::json::array();
  for (const MetricRecord& r : sr) j["images"].push_back(lffn::to_json(r));
  j["average"] = lffn::to_json(sr_average);
  j["bicubic"]["images"] = nlohmann::json::array();
  for (const MetricRecord& r : bicubic) {
    j["bicubic"]["images"].push_back(lffn::to_json(r));
  }
  j["bicubic"]["average"] = lffn::to_json(bicubic_average);
  j["failures"] = nlohmann::json::array();
  for (const EvalFailure& f : failures) {
    j["failures"].push_back({{"image", f.image}, {"error", f.error}});
  }
  return j;
}

EvalReport evaluate_images(
    std::vector<std::pair<std::string, ImagePlane>> hr_images, int scale,
    const SrBackend& backend) {
  std::sort(hr_images.begin(), hr_images.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  EvalReport report;
  report.scale = scale;
  for (const auto& [name, image] : hr_images) {
    try {
      const ImagePlane hr = mod_crop(to_rgb(image), scale);
      const ImagePlane lr = degrade(hr, scale);
      const ImagePlane sr = backend(lr, hr);
      if (sr.width() != hr.width() || sr.height() != hr.height()) {
        throw ImageError("SR output is " + std::to_string(sr.width()) + "x" +
                         std::to_string(sr.height()) + ", expected " +
                         std::to_string(hr.width()) + "x" +
                         std::to_string(hr.height()));
      }
      const ImagePlane bic = bicubic_resize_to(lr, hr.width(), hr.height());
      MetricRecord sr_row = measure(name, sr, hr, scale);
      MetricRecord bic_row = measure(name, bic, hr, scale);
      report.sr.push_back(std::move(sr_row));
      report.bicubic.push_back(std::move(bic_row));
    } catch (const std::exception& e) {
      report.failures.push_back({name, e.what()});
    }
  }
  report.sr_average = average(report.sr, scale);
  report.bicubic_average = average(report.bicubic, scale);
  return report;
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

EvalReport evaluate_directory(const std::filesystem::path& dir, int scale,
                              const SrBackend& backend) {
  std::vector<std::pair<std::string, ImagePlane>> images;
  std::vector<EvalFailure> failures;
  for (const auto& path : list_pngs(dir)) {
    try {
      images.emplace_back(path.filename().string(), load_png(path));
    } catch (const std::exception& e) {
      failures.push_back({path.filename().string(), e.what()});
    }
  }
  EvalReport report = evaluate_images(std::move(images), scale, backend);
  report.failures.insert(report.failures.begin(), failures.begin(), failures.end());
  std::sort(report.failures.begin(), report.failures.end(),
            [](const EvalFailure& a, const EvalFailure& b) { return a.image < b.image; });
  return report;
}

std::vector<ImagePlane> load_corpus(const std::filesystem::path& dir) {
  std::vector<ImagePlane> images;
  for (const auto& path : list_pngs(dir)) {
    try {
      images.push_back(to_rgb(load_png(path)));
    } catch (const std::exception& e) {
      throw ImageError(path.string() + ": " + e.what());
    }
  }
  return images;
}

}  // namespace lffn
