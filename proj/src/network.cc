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

#include "lffn/network.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>

namespace lffn {
namespace {

constexpr int kImageChannels = 3;
// Nonlinear exploration branches have these depths; the last group is linear.
constexpr int kBranchDepths[] = {1, 2, 3};
constexpr int kGroups = 4;

std::string join(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

LayerDesc conv_desc(std::string name, ConvSpec spec, int resolution = 1) {
  LayerDesc d;
  d.name = std::move(name);
  d.kind = LayerKind::kConv;
  d.conv = spec;
  d.resolution = resolution;
  return d;
}

LayerDesc prelu_desc(std::string name, int channels) {
  LayerDesc d;
  d.name = std::move(name);
  d.kind = LayerKind::kPrelu;
  d.channels = channels;
  return d;
}

ConvSpec explore_conv(const NetworkSpec& spec) {
  const int g = spec.group_width;
  return ConvSpec::same(g, g, 3, spec.depthwise ? g : 1);
}

std::string branch_name(const std::string& prefix, int branch) {
  return join(prefix, "explore.branch" + std::to_string(branch));
}

int upsample_stages(int scale) { return scale == 4 ? 2 : 1; }
int upsample_factor(int scale) { return scale == 4 ? 2 : scale; }

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoSffm:
      return "no_sffm";
    case Variant::kResidualBaseline:
      return "residual_baseline";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_sffm") return Variant::kNoSffm;
  if (name == "residual_baseline") return Variant::kResidualBaseline;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

void NetworkSpec::validate() const {
  if (blocks < 1 || modules < 1) {
    throw std::invalid_argument("blocks and modules must be >= 1");
  }
  if (scale < 2 || scale > 4) {
    throw std::invalid_argument("unsupported scale " + std::to_string(scale) +
                                " (expected 2, 3 or 4)");
  }
  if (backbone_channels < 1 || group_width < 1) {
    throw std::invalid_argument("channel widths must be positive");
  }
  if (variant == Variant::kResidualBaseline) {
    if (depthwise) {
      throw std::invalid_argument("residual baseline has no depthwise form");
    }
    if (backbone_channels != extended_channels) {
      throw std::invalid_argument(
          "residual baseline runs at backbone width = extended width");
    }
    return;
  }
  if (extended_channels != kGroups * group_width) {
    throw std::invalid_argument("extended_channels must equal 4 * group_width");
  }
  if (backbone_channels >= extended_channels) {
    throw std::invalid_argument(
        "backbone_channels must be below extended_channels");
  }
}

std::string NetworkSpec::label() const {
  std::string s = "B" + std::to_string(blocks) + "M" + std::to_string(modules) +
                  " x" + std::to_string(scale) + " " +
                  std::string(variant_name(variant));
  if (depthwise) s += " depthwise";
  return s;
}

NetworkSpec NetworkSpec::preset(std::string_view name, int scale) {
  NetworkSpec s;
  s.scale = scale;
  if (name == "lffn") {
  } else if (name == "lffn-s") {
    s.modules = 4;
    s.depthwise = true;
  } else if (name == "lffn-nf") {
    s.variant = Variant::kNoSffm;
  } else if (name == "lffn-ns") {
    s.variant = Variant::kResidualBaseline;
    s.backbone_channels = s.extended_channels;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
  }
  s.validate();
  return s;
}

std::vector<LayerDesc::Param> LayerDesc::params() const {
  switch (kind) {
    case LayerKind::kConv: {
      std::vector<Param> p{{name + ".weight", conv.weight_shape()}};
      if (conv.bias) p.push_back({name + ".bias", Shape{conv.out_channels}});
      return p;
    }
    case LayerKind::kPrelu:
      return {{name + ".alpha", Shape{channels}}};
    case LayerKind::kDense:
      return {{name + ".weight", Shape{out_channels, channels}}};
  }
  return {};
}

void append_spindle_block_layers(std::vector<LayerDesc>& out,
                                 const std::string& prefix,
                                 const NetworkSpec& spec) {
  const int c = spec.backbone_channels;
  const int e = spec.extended_channels;
  out.push_back(conv_desc(join(prefix, "extend"), ConvSpec::same(c, e, 1)));
  for (int b = 0; b < kGroups - 1; ++b) {
    const std::string branch = branch_name(prefix, b);
    for (int i = 0; i < kBranchDepths[b]; ++i) {
      out.push_back(
          conv_desc(branch + ".conv" + std::to_string(i), explore_conv(spec)));
      out.push_back(
          prelu_desc(branch + ".prelu" + std::to_string(i), spec.group_width));
    }
  }
  out.push_back(conv_desc(branch_name(prefix, kGroups - 1) + ".conv0",
                          explore_conv(spec)));
  out.push_back(conv_desc(join(prefix, "refine"), ConvSpec::same(e, c, 1)));
}

void append_residual_block_layers(std::vector<LayerDesc>& out,
                                  const std::string& prefix, int width) {
  out.push_back(conv_desc(join(prefix, "conv1"), ConvSpec::same(width, width, 3)));
  out.push_back(prelu_desc(join(prefix, "prelu"), width));
  out.push_back(conv_desc(join(prefix, "conv2"), ConvSpec::same(width, width, 3)));
}

void append_module_layers(std::vector<LayerDesc>& out,
                          const std::string& prefix, const NetworkSpec& spec) {
  const int c = spec.backbone_channels;
  for (int k = 0; k < spec.blocks; ++k) {
    const std::string block = join(prefix, "block." + std::to_string(k));
    if (spec.variant == Variant::kResidualBaseline) {
      append_residual_block_layers(out, block, c);
    } else {
      append_spindle_block_layers(out, block, spec);
    }
  }
  out.push_back(
      conv_desc(join(prefix, "fuse"), ConvSpec::same(spec.blocks * c, c, 1)));
}

void append_upsampler_layers(std::vector<LayerDesc>& out, int channels,
                             int scale) {
  if (scale < 2 || scale > 4) {
    throw std::invalid_argument("unsupported scale " + std::to_string(scale));
  }
  const int r = upsample_factor(scale);
  int resolution = 1;
  for (int s = 0; s < upsample_stages(scale); ++s) {
    out.push_back(conv_desc("up." + std::to_string(s) + ".conv",
                            ConvSpec::same(channels, channels * r * r, 1),
                            resolution));
    resolution *= r;
  }
}

std::vector<LayerDesc> describe_network(const NetworkSpec& spec) {
  spec.validate();
  const int c = spec.backbone_channels;
  std::vector<LayerDesc> layers;
  layers.push_back(
      conv_desc("head.conv", ConvSpec::same(kImageChannels, c, 3)));
  for (int d = 0; d < spec.modules; ++d) {
    append_module_layers(layers, "module." + std::to_string(d), spec);
  }
  if (spec.variant != Variant::kNoSffm) {
    for (int i = 0; i < spec.modules; ++i) {
      LayerDesc d;
      d.name = "sffm.level." + std::to_string(i);
      d.kind = LayerKind::kDense;
      d.channels = c;
      d.out_channels = c;
      layers.push_back(d);
    }
  }
  layers.push_back(conv_desc("fuse.conv", ConvSpec::same(c, c, 1)));
  append_upsampler_layers(layers, c, spec.scale);
  layers.push_back(conv_desc("tail.conv", ConvSpec::same(c, kImageChannels, 1),
                             spec.scale));
  return layers;
}

void WeightStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value)});
}

void WeightStore::remove(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("no parameter named '" + name + "'");
  }
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].name, i);
}

bool WeightStore::contains(const std::string& name) const {
  return index_.contains(name);
}

const Tensor& WeightStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("no parameter named '" + name + "'");
  }
  return entries_[it->second].value;
}

Tensor& WeightStore::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t WeightStore::total_elements() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.numel();
  return n;
}

bool operator==(const WeightStore& a, const WeightStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || !(x.value.shape() == y.value.shape())) return false;
    auto xd = x.value.data();
    auto yd = y.value.data();
    if (!std::equal(xd.begin(), xd.end(), yd.begin(), [](float p, float q) {
          return std::bit_cast<std::uint32_t>(p) ==
                 std::bit_cast<std::uint32_t>(q);
        })) {
      return false;
    }
  }
  return true;
}

WeightStore make_weight_store(const std::vector<LayerDesc>& layers) {
  WeightStore store;
  for (const LayerDesc& layer : layers) {
    for (auto& p : layer.params()) store.add(p.name, Tensor(p.shape));
  }
  return store;
}

void init_weights(WeightStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, value] : store.entries()) {
    const Shape& s = value.shape();
    if (name.ends_with(".bias")) {
      value.fill(0.0f);
    } else if (name.ends_with(".alpha")) {
      value.fill(0.25f);
    } else {
      int fan_in = 1;
      for (int i = 1; i < s.rank(); ++i) fan_in *= s[i];
      std::normal_distribution<float> dist(
          0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
      for (float& v : value.data()) v = dist(rng);
    }
  }
}

Var ParamBinder::operator()(const std::string& name) {
  if (trainable_) return tape_.parameter(name, store_.get(name));
  if (auto it = constants_.find(name); it != constants_.end()) return it->second;
  Var v = tape_.constant(store_.get(name));
  constants_.emplace(name, v);
  return v;
}

Var conv_layer(ParamBinder& p, const std::string& name, Var x,
               const ConvSpec& spec) {
  Var w = p(name + ".weight");
  std::optional<Var> b;
  if (spec.bias) b = p(name + ".bias");
  return conv2d(p.tape(), x, w, b, spec);
}

Var spindle_block(ParamBinder& p, const std::string& prefix, Var x,
                  const NetworkSpec& spec) {
  Tape& t = p.tape();
  if (t.value(x).shape().c() != spec.backbone_channels) {
    throw ShapeError("spindle block expects " +
                     std::to_string(spec.backbone_channels) +
                     " input channels, got " +
                     std::to_string(t.value(x).shape().c()));
  }
  const int c = spec.backbone_channels;
  const int e = spec.extended_channels;
  const int g = spec.group_width;
  Var extended = conv_layer(p, join(prefix, "extend"), x, ConvSpec::same(c, e, 1));

  std::vector<ChannelRange> ranges;
  for (int i = 0; i < kGroups; ++i) ranges.push_back({i * g, (i + 1) * g});
  std::vector<Var> groups = slice_channels(t, extended, ranges);

  const ConvSpec conv3 = explore_conv(spec);
  std::vector<Var> explored;
  for (int b = 0; b < kGroups - 1; ++b) {
    const std::string branch = branch_name(prefix, b);
    Var h = groups[b];
    for (int i = 0; i < kBranchDepths[b]; ++i) {
      h = conv_layer(p, branch + ".conv" + std::to_string(i), h, conv3);
      h = prelu(t, h, p(branch + ".prelu" + std::to_string(i) + ".alpha"));
    }
    explored.push_back(h);
  }
  explored.push_back(conv_layer(
      p, branch_name(prefix, kGroups - 1) + ".conv0", groups.back(), conv3));

  Var merged = concat_channels(t, explored);
  Var refined = conv_layer(p, join(prefix, "refine"), merged,
                           ConvSpec::same(e, c, 1));
  return add(t, x, refined);
}

Var residual_block(ParamBinder& p, const std::string& prefix, Var x,
                   int width) {
  Tape& t = p.tape();
  if (t.value(x).shape().c() != width) {
    throw ShapeError("residual block expects " + std::to_string(width) +
                     " input channels");
  }
  const ConvSpec conv = ConvSpec::same(width, width, 3);
  Var h = conv_layer(p, join(prefix, "conv1"), x, conv);
  h = prelu(t, h, p(join(prefix, "prelu.alpha")));
  h = conv_layer(p, join(prefix, "conv2"), h, conv);
  return add(t, x, h);
}

Var fusion_module(ParamBinder& p, const std::string& prefix, Var x,
                  const NetworkSpec& spec) {
  const int c = spec.backbone_channels;
  if (p.tape().value(x).shape().c() != c) {
    throw ShapeError("module expects " + std::to_string(c) + " input channels");
  }
  std::vector<Var> outputs;
  Var h = x;
  for (int k = 0; k < spec.blocks; ++k) {
    const std::string block = join(prefix, "block." + std::to_string(k));
    h = spec.variant == Variant::kResidualBaseline
            ? residual_block(p, block, h, c)
            : spindle_block(p, block, h, spec);
    outputs.push_back(h);
  }
  Var cat = concat_channels(p.tape(), outputs);
  Var fused = conv_layer(p, join(prefix, "fuse"), cat,
                         ConvSpec::same(spec.blocks * c, c, 1));
  return add(p.tape(), fused, x);
}

Var sffm_forward(Tape& t, std::span<const Var> levels,
                 std::span<const Var> alphas,
                 std::vector<Tensor>* level_weights) {
  if (levels.empty() || levels.size() != alphas.size()) {
    throw ShapeError("sffm: need one dense weight per level");
  }
  const Shape& s = t.value(levels[0]).shape();
  std::vector<Var> logits;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(t.value(levels[i]).shape() == s)) {
      throw ShapeError("sffm: level " + std::to_string(i) + " shape " +
                       t.value(levels[i]).shape().str() + " != " + s.str());
    }
    Var pooled = global_avg_pool(t, levels[i]);
    logits.push_back(dense(t, pooled, alphas[i]));
  }
  std::vector<Var> weights = softmax_across(t, logits);
  if (level_weights) {
    level_weights->clear();
    for (Var w : weights) level_weights->push_back(t.value(w));
  }
  Var out = scale_channels(t, levels[0], weights[0]);
  for (std::size_t i = 1; i < levels.size(); ++i) {
    out = add(t, out, scale_channels(t, levels[i], weights[i]));
  }
  return out;
}

Var upsampler(ParamBinder& p, Var x, int channels, int scale) {
  if (scale < 2 || scale > 4) {
    throw std::invalid_argument("unsupported scale " + std::to_string(scale));
  }
  const int r = upsample_factor(scale);
  Var h = x;
  for (int s = 0; s < upsample_stages(scale); ++s) {
    h = conv_layer(p, "up." + std::to_string(s) + ".conv", h,
                   ConvSpec::same(channels, channels * r * r, 1));
    h = pixel_shuffle(p.tape(), h, r);
  }
  return h;
}

Network::Network(NetworkSpec spec, WeightStore weights)
    : spec_(spec), weights_(std::move(weights)) {
  const std::vector<LayerDesc> layers = describe_network(spec_);
  std::size_t expected = 0;
  for (const LayerDesc& layer : layers) {
    for (const auto& p : layer.params()) {
      ++expected;
      if (!weights_.contains(p.name)) {
        throw std::invalid_argument("weights missing '" + p.name + "' for " +
                                    spec_.label());
      }
      if (!(weights_.get(p.name).shape() == p.shape)) {
        throw ShapeError("weight '" + p.name + "' has shape " +
                         weights_.get(p.name).shape().str() + ", expected " +
                         p.shape.str());
      }
    }
  }
  if (expected != weights_.size()) {
    throw std::invalid_argument("weights hold " + std::to_string(weights_.size()) +
                                " tensors, " + spec_.label() + " needs " +
                                std::to_string(expected));
  }
}

Network Network::create(const NetworkSpec& spec, std::uint64_t seed) {
  WeightStore store = make_weight_store(describe_network(spec));
  init_weights(store, seed);
  return Network(spec, std::move(store));
}

NetworkSpec Network::infer_spec(const WeightStore& w) {
  NetworkSpec s;
  if (!w.contains("head.conv.weight") || !w.contains("up.0.conv.weight")) {
    throw std::invalid_argument("weights do not describe an LFFN network");
  }
  s.backbone_channels = w.get("head.conv.weight").shape()[0];
  int modules = 0;
  while (w.contains("module." + std::to_string(modules) + ".fuse.weight")) {
    ++modules;
  }
  s.modules = modules;
  int blocks = 0;
  const auto block_key = [](int k, const char* leaf) {
    return "module.0.block." + std::to_string(k) + "." + leaf;
  };
  const bool residual = w.contains(block_key(0, "conv1.weight"));
  while (w.contains(block_key(blocks, residual ? "conv1.weight"
                                               : "extend.weight"))) {
    ++blocks;
  }
  s.blocks = blocks;
  if (residual) {
    s.variant = Variant::kResidualBaseline;
    s.extended_channels = s.backbone_channels;
  } else {
    s.variant = w.contains("sffm.level.0.weight") ? Variant::kFull
                                                  : Variant::kNoSffm;
    if (blocks > 0) {
      s.extended_channels = w.get(block_key(0, "extend.weight")).shape()[0];
      const Shape& conv =
          w.get(block_key(0, "explore.branch0.conv0.weight")).shape();
      s.group_width = conv[0];
      s.depthwise = conv[1] == 1 && conv[0] != 1;
    }
  }
  const int up_out = w.get("up.0.conv.weight").shape()[0];
  const int ratio = up_out / s.backbone_channels;
  if (w.contains("up.1.conv.weight")) {
    s.scale = 4;
  } else if (ratio == 4) {
    s.scale = 2;
  } else if (ratio == 9) {
    s.scale = 3;
  } else {
    throw std::invalid_argument("cannot infer scale from upsampler weights");
  }
  s.validate();
  return s;
}

Var Network::forward(ParamBinder& p, Var input,
                     std::vector<Tensor>* sffm_weights) const {
  Tape& t = p.tape();
  const Shape& in = t.value(input).shape();
  if (in.rank() != 4 || in.c() != kImageChannels) {
    throw ShapeError("network input must be (N,3,H,W) RGB, got " + in.str());
  }
  const int c = spec_.backbone_channels;
  Var m0 = conv_layer(p, "head.conv", input,
                      ConvSpec::same(kImageChannels, c, 3));
  std::vector<Var> levels;
  Var h = m0;
  for (int d = 0; d < spec_.modules; ++d) {
    h = fusion_module(p, "module." + std::to_string(d), h, spec_);
    levels.push_back(h);
  }
  Var fused_levels = levels.back();
  if (spec_.variant != Variant::kNoSffm) {
    std::vector<Var> alphas;
    for (int i = 0; i < spec_.modules; ++i) {
      alphas.push_back(p("sffm.level." + std::to_string(i) + ".weight"));
    }
    fused_levels = sffm_forward(t, levels, alphas, sffm_weights);
  } else if (sffm_weights) {
    sffm_weights->clear();
  }
  Var global = add(t, conv_layer(p, "fuse.conv", fused_levels,
                                 ConvSpec::same(c, c, 1)),
                   m0);
  Var up = upsampler(p, global, c, spec_.scale);
  return conv_layer(p, "tail.conv", up, ConvSpec::same(c, kImageChannels, 1));
}

namespace {

// Runs one piece of the graph on a scratch tape so inference only keeps the
// activations of a single block alive.
template <typename Fn>
Tensor run_stage(const WeightStore& weights, std::span<const Tensor> inputs,
                 Fn&& fn) {
  Tape tape;
  ParamBinder binder(tape, weights, /*trainable=*/false);
  std::vector<Var> vars;
  for (const Tensor& x : inputs) vars.push_back(tape.constant(x));
  return tape.value(fn(binder, std::span<const Var>(vars)));
}

}  // namespace

Tensor Network::infer(const Tensor& input,
                      std::vector<Tensor>* sffm_weights) const {
  const Shape& in = input.shape();
  if (in.rank() != 4 || in.c() != kImageChannels) {
    throw ShapeError("network input must be (N,3,H,W) RGB, got " + in.str());
  }
  const int c = spec_.backbone_channels;
  const Tensor m0 = run_stage(
      weights_, std::span(&input, 1), [&](ParamBinder& p, auto x) {
        return conv_layer(p, "head.conv", x[0],
                          ConvSpec::same(kImageChannels, c, 3));
      });

  std::vector<Tensor> levels;
  Tensor h = m0;
  for (int d = 0; d < spec_.modules; ++d) {
    const std::string module = "module." + std::to_string(d);
    std::vector<Tensor> outputs;
    Tensor b = h;
    for (int k = 0; k < spec_.blocks; ++k) {
      const std::string block = module + ".block." + std::to_string(k);
      b = run_stage(weights_, std::span(&b, 1), [&](ParamBinder& p, auto x) {
        return spec_.variant == Variant::kResidualBaseline
                   ? residual_block(p, block, x[0], c)
                   : spindle_block(p, block, x[0], spec_);
      });
      outputs.push_back(b);
    }
    outputs.push_back(h);
    h = run_stage(weights_, outputs, [&](ParamBinder& p, auto x) {
      Var cat = concat_channels(p.tape(), x.first(spec_.blocks));
      Var fused = conv_layer(p, module + ".fuse", cat,
                             ConvSpec::same(spec_.blocks * c, c, 1));
      return add(p.tape(), fused, x.back());
    });
    levels.push_back(h);
  }

  levels.push_back(m0);
  return run_stage(weights_, levels, [&](ParamBinder& p, auto x) {
    Tape& t = p.tape();
    std::span<const Var> module_outputs = x.first(spec_.modules);
    Var fused_levels = module_outputs.back();
    if (spec_.variant != Variant::kNoSffm) {
      std::vector<Var> alphas;
      for (int i = 0; i < spec_.modules; ++i) {
        alphas.push_back(p("sffm.level." + std::to_string(i) + ".weight"));
      }
      fused_levels = sffm_forward(t, module_outputs, alphas, sffm_weights);
    } else if (sffm_weights) {
      sffm_weights->clear();
    }
    Var global = add(t, conv_layer(p, "fuse.conv", fused_levels,
                                   ConvSpec::same(c, c, 1)),
                     x.back());
    Var up = upsampler(p, global, c, spec_.scale);
    return conv_layer(p, "tail.conv", up, ConvSpec::same(c, kImageChannels, 1));
  });
}

}  // namespace lffn
