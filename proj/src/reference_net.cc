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


#include "lffn/reference_net.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lffn::reference {
namespace {

using Params = std::map<std::string, std::vector<double>>;

const std::vector<double>& get(const Params& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("shadow: missing " + name);
  return it->second;
}

// Same-padded k x k convolution with `groups` groups and a bias.
Array conv(const Params& p, const std::string& name, const Array& x, int out,
           int k, int groups = 1) {
  const std::vector<double>& w = get(p, name + ".weight");
  const std::vector<double>& b = get(p, name + ".bias");
  const int pad = k / 2;
  const int in_per = x.c / groups;
  const int out_per = out / groups;
  Array y(x.n, out, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int o = 0; o < out; ++o) {
      const int g = o / out_per;
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
          double acc = b[o];
          for (int ci = 0; ci < in_per; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int sy = yy + ky - pad;
                const int sx = xx + kx - pad;
                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                acc += w[((static_cast<std::size_t>(o) * in_per + ci) * k + ky) * k + kx] *
                       x.at(i, g * in_per + ci, sy, sx);
              }
            }
          }
          y.at(i, o, yy, xx) = acc;
        }
      }
    }
  }
  return y;
}

Array prelu(const Params& p, const std::string& name, Array x,
            std::vector<bool>* kinks) {
  const std::vector<double>& a = get(p, name + ".alpha");
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
          double& v = x.at(i, ch, yy, xx);
          if (kinks) kinks->push_back(v >= 0.0);
          if (v < 0.0) v *= a[ch];
        }
      }
    }
  }
  return x;
}

Array add(Array a, const Array& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

Array channels(const Array& x, int begin, int end) {
  Array y(x.n, end - begin, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = begin; ch < end; ++ch) {
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) y.at(i, ch - begin, yy, xx) = x.at(i, ch, yy, xx);
      }
    }
  }
  return y;
}

Array stack(const std::vector<Array>& parts) {
  int total = 0;
  for (const Array& a : parts) total += a.c;
  Array y(parts[0].n, total, parts[0].h, parts[0].w);
  int offset = 0;
  for (const Array& a : parts) {
    for (int i = 0; i < a.n; ++i) {
      for (int ch = 0; ch < a.c; ++ch) {
        for (int yy = 0; yy < a.h; ++yy) {
          for (int xx = 0; xx < a.w; ++xx) y.at(i, offset + ch, yy, xx) = a.at(i, ch, yy, xx);
        }
      }
    }
    offset += a.c;
  }
  return y;
}

Array shuffle(const Array& x, int r) {
  Array y(x.n, x.c / (r * r), x.h * r, x.w * r);
  for (int i = 0; i < y.n; ++i) {
    for (int ch = 0; ch < y.c; ++ch) {
      for (int yy = 0; yy < y.h; ++yy) {
        for (int xx = 0; xx < y.w; ++xx) {
          const int src = ch * r * r + (yy % r) * r + (xx % r);
          y.at(i, ch, yy, xx) = x.at(i, src, yy / r, xx / r);
        }
      }
    }
  }
  return y;
}

Array spindle(const Params& p, const std::string& prefix, const Array& x,
              const NetworkSpec& s, std::vector<bool>* kinks) {
  const int g = s.group_width;
  const int groups = s.depthwise ? g : 1;
  const Array e = conv(p, prefix + ".extend", x, s.extended_channels, 1);
  std::vector<Array> branches;
  for (int b = 0; b < 4; ++b) {
    const std::string branch = prefix + ".explore.branch" + std::to_string(b);
    Array h = channels(e, b * g, (b + 1) * g);
    if (b == 3) {
      h = conv(p, branch + ".conv0", h, g, 3, groups);
    } else {
      for (int i = 0; i <= b; ++i) {
        h = conv(p, branch + ".conv" + std::to_string(i), h, g, 3, groups);
        h = prelu(p, branch + ".prelu" + std::to_string(i), h, kinks);
      }
    }
    branches.push_back(std::move(h));
  }
  return add(conv(p, prefix + ".refine", stack(branches), x.c, 1), x);
}

Array residual(const Params& p, const std::string& prefix, const Array& x,
               std::vector<bool>* kinks) {
  Array h = conv(p, prefix + ".conv1", x, x.c, 3);
  h = prelu(p, prefix + ".prelu", h, kinks);
  return add(conv(p, prefix + ".conv2", h, x.c, 3), x);
}

Array sffm(const Params& p, const std::vector<Array>& levels) {
  const Array& first = levels[0];
  const int m = static_cast<int>(levels.size());
  Array out(first.n, first.c, first.h, first.w);
  for (int i = 0; i < first.n; ++i) {
    std::vector<std::vector<double>> logits(m, std::vector<double>(first.c, 0.0));
    for (int l = 0; l < m; ++l) {
      std::vector<double> pooled(first.c, 0.0);
      for (int ch = 0; ch < first.c; ++ch) {
        for (int yy = 0; yy < first.h; ++yy) {
          for (int xx = 0; xx < first.w; ++xx) pooled[ch] += levels[l].at(i, ch, yy, xx);
        }
        pooled[ch] /= static_cast<double>(first.h) * first.w;
      }
      const std::vector<double>& a = get(p, "sffm.level." + std::to_string(l) + ".weight");
      for (int o = 0; o < first.c; ++o) {
        for (int ch = 0; ch < first.c; ++ch) {
          logits[l][o] += a[static_cast<std::size_t>(o) * first.c + ch] * pooled[ch];
        }
      }
    }
    for (int ch = 0; ch < first.c; ++ch) {
      double top = logits[0][ch];
      for (int l = 1; l < m; ++l) top = std::max(top, logits[l][ch]);
      double z = 0.0;
      for (int l = 0; l < m; ++l) z += std::exp(logits[l][ch] - top);
      for (int l = 0; l < m; ++l) {
        const double wl = std::exp(logits[l][ch] - top) / z;
        for (int yy = 0; yy < first.h; ++yy) {
          for (int xx = 0; xx < first.w; ++xx) {
            out.at(i, ch, yy, xx) += wl * levels[l].at(i, ch, yy, xx);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

Array to_array(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.rank() != 4) throw ShapeError("to_array: need a rank-4 tensor");
  Array a(s.n(), s.c(), s.h(), s.w());
  std::copy(t.data().begin(), t.data().end(), a.v.begin());
  return a;
}

ShadowNetwork::ShadowNetwork(const NetworkSpec& spec, const WeightStore& weights)
    : spec_(spec) {
  for (const auto& e : weights.entries()) {
    params_.emplace(e.name, std::vector<double>(e.value.data().begin(),
                                                e.value.data().end()));
  }
}

Array ShadowNetwork::forward(const Array& input, std::vector<bool>* kinks) const {
  const int c = spec_.backbone_channels;
  const Array m0 = conv(params_, "head.conv", input, c, 3);
  std::vector<Array> levels;
  Array h = m0;
  for (int d = 0; d < spec_.modules; ++d) {
    const std::string module = "module." + std::to_string(d);
    std::vector<Array> outs;
    Array b = h;
    for (int k = 0; k < spec_.blocks; ++k) {
      const std::string block = module + ".block." + std::to_string(k);
      b = spec_.variant == Variant::kResidualBaseline
              ? residual(params_, block, b, kinks)
              : spindle(params_, block, b, spec_, kinks);
      outs.push_back(b);
    }
    h = add(conv(params_, module + ".fuse", stack(outs), c, 1), h);
    levels.push_back(h);
  }
  const Array fused =
      spec_.variant == Variant::kNoSffm ? levels.back() : sffm(params_, levels);
  Array x = add(conv(params_, "fuse.conv", fused, c, 1), m0);
  const int r = spec_.scale == 4 ? 2 : spec_.scale;
  for (int s = 0; s < (spec_.scale == 4 ? 2 : 1); ++s) {
    x = shuffle(conv(params_, "up." + std::to_string(s) + ".conv", x, c * r * r, 1), r);
  }
  return conv(params_, "tail.conv", x, 3, 1);
}

}  // namespace lffn::reference
