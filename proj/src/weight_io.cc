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

#include "lffn/weight_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lffn {
namespace {

constexpr char kMagic[4] = {'L', 'F', 'F', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (pos_ + n > in_.size()) throw FormatError("weight file truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    auto s = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(s[i]) << (8 * i));
    }
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const WeightStore& store) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kWeightFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, value] : store.entries()) {
    if (name.size() > 0xFFFF) throw FormatError("parameter name too long");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    const Shape& s = value.shape();
    w.le<std::uint8_t>(static_cast<std::uint8_t>(s.rank()));
    for (int i = 0; i < s.rank(); ++i) {
      w.le<std::uint32_t>(static_cast<std::uint32_t>(s[i]));
    }
    for (float f : value.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(f));
  }
  return w.take();
}

WeightStore decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not an LFFN weight file (bad magic)");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported weight format version " +
                      std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>();
  WeightStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.le<std::uint16_t>();
    auto name_bytes = r.bytes(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.le<std::uint8_t>();
    if (rank < 1 || rank > 4) {
      throw FormatError("entry '" + name + "' has unsupported rank " +
                        std::to_string(rank));
    }
    std::vector<int> dims;
    for (int i = 0; i < rank; ++i) {
      const auto d = r.le<std::uint32_t>();
      if (d > 0x7FFFFFFF) throw FormatError("extent overflow in '" + name + "'");
      dims.push_back(static_cast<int>(d));
    }
    Tensor t{Shape(std::span<const int>(dims))};
    for (float& f : t.data()) f = std::bit_cast<float>(r.le<std::uint32_t>());
    store.add(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("trailing bytes after weight entries");
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_weights(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_weights(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lffn
