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

#include "lffn/analysis.h"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lffn {
namespace {

CostReport blank_report(const NetworkSpec& spec, int hr_width, int hr_height) {
  if (hr_width < spec.scale || hr_height < spec.scale) {
    throw std::invalid_argument("HR resolution smaller than the scale factor");
  }
  CostReport r;
  r.label = spec.label();
  r.hr_width = hr_width;
  r.hr_height = hr_height;
  r.lr_width = hr_width / spec.scale;
  r.lr_height = hr_height / spec.scale;
  return r;
}

void finish(CostReport& r) {
  r.total_params = 0;
  r.total_mult_adds = 0;
  for (const CostRow& row : r.rows) {
    r.total_params += row.params;
    r.total_mult_adds += row.mult_adds;
  }
}

std::int64_t desc_params(const LayerDesc& layer) {
  std::int64_t n = 0;
  for (const auto& p : layer.params()) n += static_cast<std::int64_t>(p.shape.numel());
  return n;
}

}  // namespace

std::int64_t layer_mult_adds(const LayerDesc& layer, int lr_width,
                             int lr_height) {
  switch (layer.kind) {
    case LayerKind::kConv: {
      const ConvSpec& c = layer.conv;
      const std::int64_t h = static_cast<std::int64_t>(lr_height) * layer.resolution;
      const std::int64_t w = static_cast<std::int64_t>(lr_width) * layer.resolution;
      return static_cast<std::int64_t>(c.kernel_h) * c.kernel_w *
             (c.in_channels / c.groups) * c.out_channels * c.out_h(static_cast<int>(h)) *
             c.out_w(static_cast<int>(w));
    }
    case LayerKind::kDense:
      return static_cast<std::int64_t>(layer.channels) * layer.out_channels;
    case LayerKind::kPrelu:
      return 0;
  }
  return 0;
}

std::int64_t count_layer_params(const std::vector<LayerDesc>& layers) {
  std::int64_t n = 0;
  for (const LayerDesc& l : layers) n += desc_params(l);
  return n;
}

CostReport count_params(const NetworkSpec& spec) {
  CostReport r = blank_report(spec, kReferenceHrWidth, kReferenceHrHeight);
  const WeightStore store = make_weight_store(describe_network(spec));
  for (const auto& e : store.entries()) {
    r.rows.push_back({e.name, static_cast<std::int64_t>(e.value.numel()), 0});
  }
  finish(r);
  return r;
}

CostReport count_mult_adds(const NetworkSpec& spec, int hr_width,
                           int hr_height) {
  CostReport r = blank_report(spec, hr_width, hr_height);
  for (const LayerDesc& layer : describe_network(spec)) {
    if (layer.kind == LayerKind::kPrelu) continue;
    r.rows.push_back(
        {layer.name, 0, layer_mult_adds(layer, r.lr_width, r.lr_height)});
  }
  finish(r);
  return r;
}

CostReport analyze(const NetworkSpec& spec, int hr_width, int hr_height) {
  CostReport r = blank_report(spec, hr_width, hr_height);
  const std::vector<LayerDesc> layers = describe_network(spec);
  const WeightStore store = make_weight_store(layers);
  for (const LayerDesc& layer : layers) {
    CostRow row{layer.name, 0, layer_mult_adds(layer, r.lr_width, r.lr_height)};
    for (const auto& p : layer.params()) {
      row.params += static_cast<std::int64_t>(store.get(p.name).numel());
    }
    r.rows.push_back(std::move(row));
  }
  finish(r);
  return r;
}

std::string CostReport::to_text() const {
  std::size_t width = 5;
  for (const CostRow& row : rows) width = std::max(width, row.name.size());
  std::ostringstream os;
  os << "# " << label << "\n";
  os << "# HR " << hr_width << "x" << hr_height << ", LR " << lr_width << "x"
     << lr_height << " (floored)\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %12s %16s\n", static_cast<int>(width),
                "layer", "params", "mult_adds");
  os << buf;
  for (const CostRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %12lld %16lld\n",
                  static_cast<int>(width), row.name.c_str(),
                  static_cast<long long>(row.params),
                  static_cast<long long>(row.mult_adds));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-*s %12lld %16lld\n", static_cast<int>(width),
                "total", static_cast<long long>(total_params),
                static_cast<long long>(total_mult_adds));
  os << buf;
  std::snprintf(buf, sizeof(buf), "params %.1fK, mult-adds %.1fG\n",
                total_params / 1e3, total_mult_adds / 1e9);
  os << buf;
  return os.str();
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os << "layer,params,mult_adds\n";
  for (const CostRow& row : rows) {
    os << row.name << ',' << row.params << ',' << row.mult_adds << '\n';
  }
  os << "total," << total_params << ',' << total_mult_adds << '\n';
  return os.str();
}

double spindle_to_residual_ratio(const NetworkSpec& spec) {
  std::vector<LayerDesc> spindle;
  append_spindle_block_layers(spindle, "block", spec);
  std::vector<LayerDesc> residual;
  append_residual_block_layers(residual, "block", spec.extended_channels);
  return static_cast<double>(count_layer_params(spindle)) /
         static_cast<double>(count_layer_params(residual));
}

std::vector<std::vector<double>> dump_sffm_weights(const Network& net,
                                                   const ImagePlane& image) {
  if (net.spec().variant == Variant::kNoSffm) {
    throw std::invalid_argument(
        "variant no_sffm has no fusion weights to dump");
  }
  if (image.channels() != 3) throw ImageError("SFFM dump needs an RGB image");
  std::vector<Tensor> levels;
  net.infer(to_tensor(image), &levels);
  std::vector<std::vector<double>> out;
  for (const Tensor& w : levels) {
    out.emplace_back(w.data().begin(), w.data().end());
  }
  return out;
}

std::string sffm_weights_csv(const std::vector<std::vector<double>>& w) {
  std::ostringstream os;
  os << "level";
  const std::size_t channels = w.empty() ? 0 : w.front().size();
  for (std::size_t c = 0; c < channels; ++c) os << ",c" << c;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < w.size(); ++i) {
    os << i;
    for (double v : w[i]) {
      std::snprintf(buf, sizeof(buf), ",%.9g", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace lffn
