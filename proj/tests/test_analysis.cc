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


#include <cmath>
#include <sstream>
#include <string>

#include "doctest.h"
#include "lffn/analysis.h"
#include "lffn/weight_io.h"
#include "support.h"

using namespace lffn;

namespace {

std::int64_t row_sum(const CostReport& r, std::int64_t CostRow::*field) {
  std::int64_t n = 0;
  for (const CostRow& row : r.rows) n += row.*field;
  return n;
}

}  // namespace

TEST_CASE("conv mult-adds formula") {
  LayerDesc conv;
  conv.kind = LayerKind::kConv;
  conv.conv = ConvSpec::same(48, 48, 3);
  CHECK(layer_mult_adds(conv, 320, 180) == 3LL * 3 * 48 * 48 * 320 * 180);
  CHECK(layer_mult_adds(conv, 320, 180) == 1194393600LL);
  conv.conv = ConvSpec::same(16, 16, 3, 16);
  CHECK(layer_mult_adds(conv, 10, 10) == 3 * 3 * 16 * 100);
  conv.conv = ConvSpec::same(48, 192, 1);
  conv.resolution = 2;
  CHECK(layer_mult_adds(conv, 10, 10) == 48LL * 192 * 400);
  LayerDesc dense;
  dense.kind = LayerKind::kDense;
  dense.channels = 48;
  dense.out_channels = 48;
  CHECK(layer_mult_adds(dense, 320, 180) == 48 * 48);
}

TEST_CASE("reports total their rows") {
  for (const char* name : {"lffn", "lffn-s", "lffn-nf", "lffn-ns"}) {
    for (int scale : {2, 3, 4}) {
      const NetworkSpec spec = NetworkSpec::preset(name, scale);
      const CostReport p = count_params(spec);
      const CostReport m = count_mult_adds(spec);
      const CostReport a = analyze(spec);
      CHECK(p.total_params == row_sum(p, &CostRow::params));
      CHECK(m.total_mult_adds == row_sum(m, &CostRow::mult_adds));
      CHECK(a.total_params == p.total_params);
      CHECK(a.total_mult_adds == m.total_mult_adds);
      CHECK(m.lr_width == 1280 / scale);
      CHECK(m.lr_height == 720 / scale);
    }
  }
}

TEST_CASE("parameter count equals the serialised element count") {
  for (const char* name : {"lffn", "lffn-s", "lffn-nf", "lffn-ns"}) {
    const NetworkSpec spec = NetworkSpec::preset(name, 4);
    const Network net = Network::create(spec, 1);
    const std::vector<std::uint8_t> bytes = encode_weights(net.weights());
    std::size_t elements = 0;
    for (const auto& e : decode_weights(bytes).entries()) elements += e.value.numel();
    CHECK(count_params(spec).total_params == static_cast<std::int64_t>(elements));
    CHECK(count_params(spec).rows.size() == net.weights().size());
  }
}

TEST_CASE("doubling the HR width doubles every conv row") {
  const NetworkSpec spec = NetworkSpec::preset("lffn", 2);
  const CostReport base = count_mult_adds(spec, 640, 360);
  const CostReport wide = count_mult_adds(spec, 1280, 360);
  REQUIRE(base.rows.size() == wide.rows.size());
  const std::vector<LayerDesc> layers = describe_network(spec);
  std::size_t i = 0;
  for (const LayerDesc& l : layers) {
    if (l.kind == LayerKind::kPrelu) continue;
    CAPTURE(l.name);
    if (l.kind == LayerKind::kConv) {
      CHECK(wide.rows[i].mult_adds == 2 * base.rows[i].mult_adds);
    } else {
      CHECK(wide.rows[i].mult_adds == base.rows[i].mult_adds);
    }
    ++i;
  }
}

TEST_CASE("published totals") {
  struct Row {
    const char* preset;
    int scale;
    double params_k, params_tol, gmacs, gmacs_tol;
  };
  const Row rows[] = {{"lffn", 2, 1522, 0.02, 342.8, 0.05},
                      {"lffn", 3, 1534, 0.02, 153.6, 0.05},
                      {"lffn", 4, 1531, 0.02, 87.9, 0.05},
                      {"lffn-s", 2, 173, 0.05, 37.9, 0.10},
                      {"lffn-s", 3, 185, 0.05, 18.1, 0.10},
                      {"lffn-s", 4, 183, 0.05, 11.7, 0.10}};
  for (const Row& r : rows) {
    CAPTURE(r.preset);
    CAPTURE(r.scale);
    const CostReport a = analyze(NetworkSpec::preset(r.preset, r.scale));
    CHECK(std::abs(a.total_params / 1e3 / r.params_k - 1.0) <= r.params_tol);
    CHECK(std::abs(a.total_mult_adds / 1e9 / r.gmacs - 1.0) <= r.gmacs_tol);
  }
  CHECK(std::abs(count_params(NetworkSpec::preset("lffn-nf", 4)).total_params /
                     1497e3 - 1.0) <= 0.05);
  CHECK(std::abs(count_params(NetworkSpec::preset("lffn-ns", 4)).total_params /
                     4770e3 - 1.0) <= 0.05);
}

TEST_CASE("block ratios follow the hand counts") {
  NetworkSpec spec;
  CHECK(spindle_to_residual_ratio(spec) == doctest::Approx(22592.0 / 73920.0));
  spec.depthwise = true;
  CHECK(spindle_to_residual_ratio(spec) == doctest::Approx(7472.0 / 73920.0));
}

TEST_CASE("report rendering") {
  const CostReport r = analyze(NetworkSpec::preset("lffn", 3));
  const std::string text = r.to_text();
  CHECK(text.find("LR 426x240") != std::string::npos);
  CHECK(text.find("floored") != std::string::npos);
  const std::string csv = r.to_csv();
  std::istringstream in(csv);
  std::string line, last;
  std::getline(in, line);
  CHECK(line == "layer,params,mult_adds");
  int count = 0;
  while (std::getline(in, line)) {
    ++count;
    last = line;
  }
  CHECK(count == static_cast<int>(r.rows.size()) + 1);
  CHECK(last == "total," + std::to_string(r.total_params) + "," +
                    std::to_string(r.total_mult_adds));
  CHECK_THROWS_AS(analyze(NetworkSpec{}, 2, 2), std::invalid_argument);
}

TEST_CASE("sffm weight dump") {
  NetworkSpec spec;
  spec.blocks = 1;
  spec.modules = 3;
  spec.scale = 2;
  Network net = Network::create(spec, 5);
  const ImagePlane img = testing::noise_image(12, 10, 6);
  const auto w = dump_sffm_weights(net, img);
  REQUIRE(w.size() == 3);
  for (std::size_t c = 0; c < w[0].size(); ++c) {
    double total = 0;
    for (const auto& level : w) total += level[c];
    CHECK(std::abs(total - 1.0) < 1e-6);
  }

  // CSV: one row per level, one column per channel.
  const std::string csv = sffm_weights_csv(w);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("level,c0,c1,", 0) == 0);
  CHECK(std::count(header.begin(), header.end(), ',') == 48);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  for (auto& e : net.weights().entries()) {
    if (e.name.rfind("sffm.", 0) == 0) e.value.fill(0.0f);
  }
  for (const auto& level : dump_sffm_weights(net, img)) {
    for (double v : level) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  }

  NetworkSpec nf = spec;
  nf.variant = Variant::kNoSffm;
  CHECK_THROWS_AS(dump_sffm_weights(Network::create(nf, 7), img),
                  std::invalid_argument);
  ImagePlane gray(12, 10, 1, ColorSpace::kGray);
  CHECK_THROWS_AS(dump_sffm_weights(net, gray), ImageError);
}
