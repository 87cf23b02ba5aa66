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
#include <cstring>
#include <string>

#include "doctest.h"
#include "lffn/network.h"
#include "lffn/weight_io.h"
#include "support.h"

using namespace lffn;
using testing::random_tensor;

namespace {

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() &&
         s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

// Random init followed by zeroing every conv weight and bias whose name
// starts with one of `prefixes`.
WeightStore store_for(const std::vector<LayerDesc>& layers, std::uint64_t seed,
                      std::initializer_list<std::string> zero_prefixes) {
  WeightStore store = make_weight_store(layers);
  init_weights(store, seed);
  for (auto& e : store.entries()) {
    if (ends_with(e.name, ".alpha")) continue;
    for (const std::string& p : zero_prefixes) {
      if (e.name.rfind(p, 0) == 0) e.value.fill(0.0f);
    }
  }
  return store;
}

NetworkSpec tiny(int scale = 2, Variant v = Variant::kFull) {
  NetworkSpec s;
  s.blocks = 1;
  s.modules = 2;
  s.scale = scale;
  s.variant = v;
  if (v == Variant::kResidualBaseline) s.backbone_channels = s.extended_channels;
  return s;
}

// The `up.*` convs give the same result in any graph; the test composes
// them by hand.
Tensor compose_head_up_tail(const Network& net, const Tensor& x) {
  Tape t;
  ParamBinder p(t, net.weights(), false);
  const int c = net.spec().backbone_channels;
  Var h = conv_layer(p, "head.conv", t.constant(x), ConvSpec::same(3, c, 3));
  h = upsampler(p, h, c, net.spec().scale);
  h = conv_layer(p, "tail.conv", h, ConvSpec::same(c, 3, 1));
  return t.value(h);
}

std::int64_t count_layer_params(const std::vector<LayerDesc>& layers) {
  std::int64_t n = 0;
  for (const LayerDesc& l : layers) {
    for (const auto& p : l.params()) n += static_cast<std::int64_t>(p.shape.numel());
  }
  return n;
}

}  // namespace

TEST_CASE("zeroed spindle block is the identity") {
  for (bool dw : {false, true}) {
    NetworkSpec spec;
    spec.depthwise = dw;
    std::vector<LayerDesc> layers;
    append_spindle_block_layers(layers, "block", spec);
    const WeightStore store = store_for(layers, 1, {"block"});
    Tape t;
    ParamBinder p(t, store, false);
    const Tensor x = random_tensor(Shape{2, 48, 5, 4}, 2);
    const Tensor y = t.value(spindle_block(p, "block", t.constant(x), spec));
    CHECK(testing::max_abs_diff(x, y) == 0.0);
    CHECK_THROWS_AS(spindle_block(p, "block", t.constant(Tensor::nchw(1, 32, 4, 4)), spec),
                    ShapeError);
  }
}

TEST_CASE("zeroed residual block is the identity") {
  std::vector<LayerDesc> layers;
  append_residual_block_layers(layers, "block", 64);
  const WeightStore store = store_for(layers, 3, {"block"});
  Tape t;
  ParamBinder p(t, store, false);
  const Tensor x = random_tensor(Shape{1, 64, 4, 6}, 4);
  CHECK(testing::max_abs_diff(
            x, t.value(residual_block(p, "block", t.constant(x), 64))) == 0.0);
}

TEST_CASE("module with a zeroed fusion conv is the identity") {
  NetworkSpec spec;
  spec.blocks = 1;
  std::vector<LayerDesc> layers;
  append_module_layers(layers, "module.0", spec);
  const WeightStore store = store_for(layers, 5, {"module.0.fuse"});
  Tape t;
  ParamBinder p(t, store, false);
  const Tensor x = random_tensor(Shape{1, 48, 4, 4}, 6);
  CHECK(testing::max_abs_diff(
            x, t.value(fusion_module(p, "module.0", t.constant(x), spec))) == 0.0);

  NetworkSpec b4;
  std::vector<LayerDesc> wide;
  append_module_layers(wide, "m", b4);
  bool found = false;
  for (const LayerDesc& l : wide) {
    if (l.name == "m.fuse") {
      CHECK(l.conv.in_channels == 192);
      CHECK(l.conv.out_channels == 48);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("zero-body network reduces to head, upsampler and tail") {
  for (int scale : {2, 3, 4}) {
    const NetworkSpec spec = tiny(scale);
    WeightStore store = store_for(describe_network(spec), 7,
                                  {"module.0.fuse", "module.1.fuse", "fuse.conv"});
    const Network net(spec, std::move(store));
    const Tensor x = random_tensor(Shape{1, 3, 5, 6}, 8, 0.0f, 1.0f);
    const Tensor y = net.infer(x);
    CHECK(y.shape() == Shape{1, 3, 5 * scale, 6 * scale});
    CHECK(testing::max_abs_diff(y, compose_head_up_tail(net, x)) < 1e-5);
  }
}

TEST_CASE("hand-counted parameters") {
  NetworkSpec spec;
  std::vector<LayerDesc> block;
  append_spindle_block_layers(block, "b", spec);
  // extend 48*64+64, seven 3x3 16->16 convs, six slopes of 16, refine 64*48+48.
  CHECK(count_layer_params(block) == 3136 + 7 * 2320 + 96 + 3120);
  CHECK(count_layer_params(block) == 22592);

  spec.depthwise = true;
  std::vector<LayerDesc> dw;
  append_spindle_block_layers(dw, "b", spec);
  CHECK(count_layer_params(dw) == 3136 + 7 * (16 * 9 + 16) + 96 + 3120);

  std::vector<LayerDesc> res;
  append_residual_block_layers(res, "r", 64);
  CHECK(count_layer_params(res) == 2 * (3 * 3 * 64 * 64) + 2 * 64 + 64);

  NetworkSpec full;
  std::vector<LayerDesc> module;
  append_module_layers(module, "m", full);
  CHECK(count_layer_params(module) == 4 * 22592 + (192 * 48 + 48));

  for (auto [scale, expect] : {std::pair{2, 48 * 192 + 192},
                               std::pair{3, 48 * 432 + 432},
                               std::pair{4, 2 * (48 * 192 + 192)}}) {
    std::vector<LayerDesc> up;
    append_upsampler_layers(up, 48, scale);
    CHECK(count_layer_params(up) == expect);
  }

  // head + 15 modules + 15 SFFM matrices + fuse + x4 upsampler + tail.
  const std::int64_t total = (3 * 9 * 48 + 48) + 15 * (4 * 22592 + 9264) +
                             15 * 48 * 48 + (48 * 48 + 48) +
                             2 * (48 * 192 + 192) + (48 * 3 + 3);
  const WeightStore store = make_weight_store(describe_network(NetworkSpec{}));
  CHECK(static_cast<std::int64_t>(store.total_elements()) == total);
  CHECK(count_layer_params(describe_network(NetworkSpec{})) == total);
}

TEST_CASE("upsampler shapes") {
  std::vector<LayerDesc> layers;
  append_upsampler_layers(layers, 48, 4);
  WeightStore store = make_weight_store(layers);
  init_weights(store, 9);
  Tape t;
  ParamBinder p(t, store, false);
  const Var x = t.constant(random_tensor(Shape{1, 48, 8, 8}, 10));
  CHECK(t.value(upsampler(p, x, 48, 4)).shape() == Shape{1, 48, 32, 32});
  CHECK(layers.front().conv.out_channels == 192);
  CHECK_THROWS(upsampler(p, x, 48, 5));
}

namespace {

struct SffmCase {
  std::vector<Tensor> levels, alphas;
};

SffmCase sffm_case(int m, int c, std::uint64_t seed) {
  SffmCase k;
  for (int i = 0; i < m; ++i) {
    k.levels.push_back(random_tensor(Shape{2, c, 3, 4}, seed + 2 * i));
    k.alphas.push_back(random_tensor(Shape{c, c}, seed + 2 * i + 1));
  }
  return k;
}

Tensor run_sffm(const SffmCase& k, std::vector<Tensor>* weights = nullptr) {
  Tape t;
  std::vector<Var> lv, av;
  for (const Tensor& l : k.levels) lv.push_back(t.constant(l));
  for (const Tensor& a : k.alphas) av.push_back(t.constant(a));
  return t.value(sffm_forward(t, lv, av, weights));
}

}  // namespace

TEST_CASE("sffm with one level passes it through") {
  const SffmCase k = sffm_case(1, 6, 20);
  std::vector<Tensor> w;
  const Tensor y = run_sffm(k, &w);
  REQUIRE(w.size() == 1);
  for (float v : w[0].data()) CHECK(v == 1.0f);
  CHECK(testing::max_abs_diff(y, k.levels[0]) == 0.0);
}

TEST_CASE("sffm with zero alphas averages the levels") {
  SffmCase k = sffm_case(3, 5, 30);
  for (Tensor& a : k.alphas) a.fill(0.0f);
  std::vector<Tensor> w;
  const Tensor y = run_sffm(k, &w);
  for (const Tensor& wi : w)
    for (float v : wi.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const double mean = (static_cast<double>(k.levels[0][i]) + k.levels[1][i] +
                         k.levels[2][i]) / 3.0;
    CHECK(std::abs(y[i] - mean) < 1e-6);
  }
}

TEST_CASE("sffm matches scalar loops and stays convex") {
  for (int m : {2, 4}) {
    const SffmCase k = sffm_case(m, 7, 40 + m);
    std::vector<Tensor> w;
    const Tensor y = run_sffm(k, &w);
    CHECK(testing::max_abs_diff(y, testing::sffm_oracle(k.levels, k.alphas)) < 1e-5);
    for (std::size_t j = 0; j < w[0].numel(); ++j) {
      double total = 0;
      for (const Tensor& wi : w) {
        CHECK(wi[j] > 0.0f);
        total += wi[j];
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    for (std::size_t p = 0; p < y.numel(); ++p) {
      float lo = k.levels[0][p], hi = lo;
      for (const Tensor& l : k.levels) {
        lo = std::min(lo, l[p]);
        hi = std::max(hi, l[p]);
      }
      CHECK(y[p] >= lo - 1e-6f);
      CHECK(y[p] <= hi + 1e-6f);
    }
  }
  SffmCase bad = sffm_case(2, 4, 50);
  bad.levels[1] = Tensor::nchw(2, 4, 3, 5);
  CHECK_THROWS_AS(run_sffm(bad), ShapeError);
}

TEST_CASE("He initialisation") {
  std::vector<LayerDesc> res;
  append_residual_block_layers(res, "r", 64);
  WeightStore store = make_weight_store(res);
  init_weights(store, 60);
  const Tensor& w = store.get("r.conv1.weight");
  REQUIRE(w.numel() == 36864);
  double mean = 0, var = 0;
  for (float v : w.data()) mean += v;
  mean /= w.numel();
  for (float v : w.data()) var += (v - mean) * (v - mean);
  var /= w.numel();
  const double expect = 2.0 / (3 * 3 * 64);
  CHECK(std::abs(var - expect) < 0.1 * expect);
  CHECK(std::abs(mean) < 0.05 * std::sqrt(expect));

  const Network net = Network::create(NetworkSpec{}, 61);
  for (const auto& e : net.weights().entries()) {
    if (ends_with(e.name, ".bias")) {
      for (float v : e.value.data()) REQUIRE(v == 0.0f);
    }
    if (ends_with(e.name, ".alpha")) {
      for (float v : e.value.data()) REQUIRE(v == 0.25f);
    }
  }
}

TEST_CASE("initialisation is deterministic per seed") {
  const NetworkSpec spec = tiny();
  CHECK(Network::create(spec, 70).weights() == Network::create(spec, 70).weights());
  CHECK(!(Network::create(spec, 70).weights() == Network::create(spec, 71).weights()));
}

TEST_CASE("weight container round trip") {
  const Network net = Network::create(tiny(3), 80);
  const std::vector<std::uint8_t> bytes = encode_weights(net.weights());
  REQUIRE(bytes.size() > 12);
  CHECK(std::memcmp(bytes.data(), "LFFN", 4) == 0);
  CHECK(bytes[4] == kWeightFormatVersion);
  CHECK(bytes[5] == 0);
  std::size_t payload = 12;
  for (const auto& e : net.weights().entries()) {
    payload += 2 + e.name.size() + 1 + 4 * e.value.shape().rank() + 4 * e.value.numel();
  }
  CHECK(bytes.size() == payload);

  const WeightStore back = decode_weights(bytes);
  CHECK(back == net.weights());
  CHECK(encode_weights(back) == bytes);

  testing::TempDir dir;
  save_weights(net.weights(), dir / "w.lffn");
  CHECK(load_weights(dir / "w.lffn") == net.weights());
  CHECK_THROWS(load_weights(dir / "missing.lffn"));
}

TEST_CASE("weight container rejects damaged input") {
  const std::vector<std::uint8_t> good = encode_weights(Network::create(tiny(), 81).weights());
  std::vector<std::uint8_t> magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_weights(magic), FormatError);
  std::vector<std::uint8_t> version = good;
  version[4] = 9;
  CHECK_THROWS_AS(decode_weights(version), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{11}, good.size() / 2, good.size() - 1}) {
    CHECK_THROWS_AS(decode_weights(std::span(good.data(), cut)), FormatError);
  }
  std::vector<std::uint8_t> extra = good;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_weights(extra), FormatError);
}

TEST_CASE("every parameter receives a gradient") {
  for (Variant v : {Variant::kFull, Variant::kNoSffm, Variant::kResidualBaseline}) {
    CAPTURE(variant_name(v));
    const Network net = Network::create(tiny(2, v), 90);
    Tape t;
    ParamBinder p(t, net.weights(), true);
    const Var y = net.forward(p, t.constant(random_tensor(Shape{2, 3, 6, 6}, 91, 0, 1)));
    const GradientMap g = t.backward(
        l1_loss(t, y, random_tensor(Shape{2, 3, 12, 12}, 92, 0, 1)));
    CHECK(g.size() == net.weights().size());
    for (const auto& e : net.weights().entries()) {
      CAPTURE(e.name);
      REQUIRE(g.count(e.name) == 1);
      double total = 0;
      for (float x : g.at(e.name).data()) total += std::abs(x);
      CHECK(total > 0.0);
    }
  }
}

TEST_CASE("inference matches the recorded forward pass") {
  for (Variant v : {Variant::kFull, Variant::kNoSffm, Variant::kResidualBaseline}) {
    NetworkSpec spec = tiny(3, v);
    spec.depthwise = v == Variant::kFull;
    const Network net = Network::create(spec, 100);
    const Tensor x = random_tensor(Shape{2, 3, 7, 5}, 101, 0, 1);
    Tape t;
    ParamBinder p(t, net.weights(), false);
    std::vector<Tensor> wf, wi;
    const Tensor a = t.value(net.forward(p, t.constant(x), &wf));
    const Tensor b = net.infer(x, &wi);
    CHECK(a.shape() == Shape{2, 3, 21, 15});
    CHECK(testing::max_abs_diff(a, b) < 1e-5);
    CHECK(wf.size() == wi.size());
    const Tensor c = net.infer(x);
    CHECK(std::equal(b.data().begin(), b.data().end(), c.data().begin()));
  }
  const Network net = Network::create(tiny(), 102);
  CHECK_THROWS_AS(net.infer(Tensor::nchw(1, 1, 4, 4)), ShapeError);
}

TEST_CASE("spec presets, validation and recovery from weights") {
  const NetworkSpec full = NetworkSpec::preset("lffn", 4);
  CHECK(full.blocks == 4);
  CHECK(full.modules == 15);
  const NetworkSpec small = NetworkSpec::preset("lffn-s", 2);
  CHECK(small.modules == 4);
  CHECK(small.depthwise);
  CHECK_THROWS_AS(NetworkSpec::preset("nope", 2), std::invalid_argument);
  CHECK_THROWS_AS(parse_variant("nope"), std::invalid_argument);
  NetworkSpec bad;
  bad.group_width = 8;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = NetworkSpec{};
  bad.scale = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  for (const char* name : {"lffn", "lffn-s", "lffn-nf", "lffn-ns"}) {
    for (int scale : {2, 3, 4}) {
      const NetworkSpec s = NetworkSpec::preset(name, scale);
      const NetworkSpec r = Network::infer_spec(make_weight_store(describe_network(s)));
      CAPTURE(name);
      CHECK(r.label() == s.label());
      CHECK(r.blocks == s.blocks);
      CHECK(r.modules == s.modules);
      CHECK(r.scale == s.scale);
      CHECK(r.depthwise == s.depthwise);
      CHECK(r.variant == s.variant);
    }
  }
  WeightStore partial = Network::create(tiny(), 110).weights();
  partial.remove(partial.entries().back().name);
  CHECK_FALSE(partial.contains(Network::create(tiny(), 110).weights().entries().back().name));
  CHECK_THROWS(Network(tiny(), partial));

  WeightStore store;
  store.add("a", Tensor(Shape{1}));
  store.add("b", Tensor(Shape{2}));
  store.add("c", Tensor(Shape{3}));
  store.remove("b");
  CHECK(store.size() == 2);
  CHECK_FALSE(store.contains("b"));
  CHECK(store.get("c").numel() == 3);
  CHECK(store.get("a").numel() == 1);
  CHECK_THROWS_AS(store.remove("b"), std::out_of_range);
}
