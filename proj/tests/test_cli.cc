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


// End-to-end checks of the `lffn` binary.

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "lffn/evaluate.h"
#include "lffn/weight_io.h"
#include "support.h"

using namespace lffn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run lffn_cli(const std::string& args) {
  const std::string cmd = quote(LFFN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  Run r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NetworkSpec tiny(int scale, Variant v = Variant::kFull) {
  NetworkSpec s;
  s.blocks = 1;
  s.modules = 2;
  s.scale = scale;
  s.variant = v;
  return s;
}

fs::path save_tiny(const testing::TempDir& dir, int scale,
                   Variant v = Variant::kFull) {
  const fs::path p = dir / ("tiny_x" + std::to_string(scale) + ".lffn");
  save_weights(Network::create(tiny(scale, v), 3).weights(), p);
  return p;
}

fs::path make_corpus(const testing::TempDir& dir) {
  const fs::path c = dir / "corpus";
  fs::create_directories(c);
  save_png(testing::noise_image(24, 20, 1), c / "b.png");
  save_png(testing::textured_image(32, 28), c / "a.png");
  return c;
}

const std::string kTrainFlags =
    "--preset lffn --blocks 1 --modules 1 --scale 2 --batch 2 --patch 8 "
    "--log-every 0 ";

int csv_rows(const std::string& csv) {
  return static_cast<int>(std::count(csv.begin(), csv.end(), '\n')) - 1;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  testing::TempDir dir;
  CHECK(lffn_cli("").code == 2);
  CHECK(lffn_cli("--help").code == 0);
  CHECK(lffn_cli("frobnicate").code == 2);

  const std::string missing = (dir / "no_such_corpus").string();
  const Run r = lffn_cli("train --corpus " + quote(missing) + " --out " +
                         quote((dir / "w.lffn").string()));
  CHECK(r.code == 2);
  CHECK(r.output.find(missing) != std::string::npos);

  const Run p = lffn_cli("analyze --preset lffn-xl");
  CHECK(p.code == 2);
  CHECK(p.output.find("lffn-xl") != std::string::npos);
  CHECK(lffn_cli("analyze --scale 5").code == 2);

  const fs::path empty = dir / "empty";
  fs::create_directories(empty);
  CHECK(lffn_cli("train --corpus " + quote(empty.string()) + " --out " +
                 quote((dir / "w.lffn").string()))
            .code == 2);

  std::ofstream(dir / "bad.json") << "{ not json";
  const fs::path corpus = make_corpus(dir);
  CHECK(lffn_cli("train --corpus " + quote(corpus.string()) + " --out " +
                 quote((dir / "w.lffn").string()) + " --config " +
                 quote((dir / "bad.json").string()))
            .code == 2);
  CHECK(lffn_cli("sr --weights " + quote((dir / "nope.lffn").string()) +
                 " --input x.png --out y.png")
            .code == 2);
}

TEST_CASE("analyze reports presets") {
  const Run full = lffn_cli("analyze --preset lffn --scale 4");
  REQUIRE(full.code == 0);
  CHECK(full.output.find("params 1551.7K, mult-adds 87.9G") != std::string::npos);
  const Run small = lffn_cli("analyze --preset lffn-s --scale 2 --format csv");
  REQUIRE(small.code == 0);
  const std::size_t total = small.output.rfind("total,");
  REQUIRE(total != std::string::npos);
  std::istringstream row(small.output.substr(total + 6));
  long long params = 0, macs = 0;
  char comma;
  row >> params >> comma >> macs;
  CHECK(std::abs(params / 173e3 - 1.0) <= 0.05);
  CHECK(std::abs(macs / 37.9e9 - 1.0) <= 0.10);
}

TEST_CASE("sr output extents and byte determinism") {
  testing::TempDir dir;
  const fs::path w = save_tiny(dir, 3);
  save_png(testing::noise_image(100, 80, 4), dir / "lr.png");
  const std::string base = "sr --weights " + quote(w.string()) + " --input " +
                           quote((dir / "lr.png").string()) + " --out ";
  REQUIRE(lffn_cli(base + quote((dir / "a.png").string())).code == 0);
  REQUIRE(lffn_cli(base + quote((dir / "b.png").string())).code == 0);
  const ImagePlane out = load_png(dir / "a.png");
  CHECK(out.width() == 300);
  CHECK(out.height() == 240);
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
  CHECK(lffn_cli(base + quote((dir / "c.png").string()) + " --scale 2").code == 2);
}

TEST_CASE("train is deterministic and honours flag precedence") {
  testing::TempDir dir;
  const fs::path corpus = make_corpus(dir);
  const std::string common = "train " + kTrainFlags + "--corpus " +
                             quote(corpus.string()) + " --seed 5 --iterations 3 --out ";
  REQUIRE(lffn_cli(common + quote((dir / "a.lffn").string())).code == 0);
  REQUIRE(lffn_cli(common + quote((dir / "b.lffn").string())).code == 0);
  const std::string a = slurp(dir / "a.loss.csv");
  CHECK(csv_rows(a) == 3);
  CHECK(a == slurp(dir / "b.loss.csv"));
  CHECK(slurp(dir / "a.lffn") == slurp(dir / "b.lffn"));
  CHECK(fs::exists(dir / "a.best.lffn"));

  std::ofstream(dir / "cfg.json") << R"({"iterations": 5, "lr0": 0.002, "seed": 9})";
  const std::string with_config = "train " + kTrainFlags + "--corpus " +
                                  quote(corpus.string()) + " --config " +
                                  quote((dir / "cfg.json").string());
  REQUIRE(lffn_cli(with_config + " --out " + quote((dir / "j.lffn").string())).code == 0);
  const std::string j = slurp(dir / "j.loss.csv");
  CHECK(csv_rows(j) == 5);
  CHECK(j.find(",0.002,") != std::string::npos);
  REQUIRE(lffn_cli(with_config + " --iterations 2 --lr0 0.003 --out " +
                   quote((dir / "f.lffn").string()))
              .code == 0);
  const std::string f = slurp(dir / "f.loss.csv");
  CHECK(csv_rows(f) == 2);
  CHECK(f.find(",0.003,") != std::string::npos);

  // Fine-tuning starts at the lower rate unless told otherwise.
  REQUIRE(lffn_cli("train --log-every 0 --batch 2 --patch 8 --iterations 2 --corpus " +
                   quote(corpus.string()) + " --resume " +
                   quote((dir / "a.lffn").string()) + " --out " +
                   quote((dir / "r.lffn").string()))
              .code == 0);
  CHECK(slurp(dir / "r.loss.csv").find(",0.0004,") != std::string::npos);
}

TEST_CASE("eval reports") {
  testing::TempDir dir;
  const fs::path corpus = make_corpus(dir);
  std::ofstream(corpus / "notes.txt") << "ignored";
  const Run id = lffn_cli("eval --backend identity --scale 2 --corpus " +
                          quote(corpus.string()) + " --out " +
                          quote((dir / "id.json").string()));
  REQUIRE(id.code == 0);
  const nlohmann::json ij = nlohmann::json::parse(slurp(dir / "id.json"));
  REQUIRE(ij["images"].size() == 2);
  CHECK(ij["images"][0]["image"] == "a.png");
  for (const auto& row : ij["images"]) {
    CHECK(row["psnr_db"] == "inf");
    CHECK(row["ssim"] == 1.0);
  }
  CHECK(ij["average"]["psnr_db"] == "inf");

  const fs::path w = save_tiny(dir, 2);
  const Run net = lffn_cli("eval --weights " + quote(w.string()) + " --corpus " +
                           quote(corpus.string()));
  REQUIRE(net.code == 0);
  const nlohmann::json nj = nlohmann::json::parse(net.output.substr(net.output.find('{')));
  double psnr = 0, ssim = 0;
  for (const auto& row : nj["images"]) {
    psnr += row["psnr_db"].get<double>();
    ssim += row["ssim"].get<double>();
  }
  CHECK(nj["average"]["psnr_db"].get<double>() == doctest::Approx(psnr / 2));
  CHECK(nj["average"]["ssim"].get<double>() == doctest::Approx(ssim / 2));
  CHECK(nj["bicubic"]["images"].size() == 2);
  CHECK(nj["scale"] == 2);
  CHECK(lffn_cli("eval --weights " + quote(w.string()) + " --scale 4 --corpus " +
                 quote(corpus.string()))
            .code == 2);
}

TEST_CASE("eval records a failing image and carries on") {
  testing::TempDir dir;
  const fs::path corpus = make_corpus(dir);
  std::ofstream(corpus / "c.png") << "broken";
  const Run r = lffn_cli("eval --backend identity --scale 2 --corpus " +
                         quote(corpus.string()));
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.output.substr(r.output.find('{')));
  CHECK(j["images"].size() == 2);
  REQUIRE(j["failures"].size() == 1);
  CHECK(j["failures"][0]["image"] == "c.png");
}

TEST_CASE("dump-sffm") {
  testing::TempDir dir;
  const fs::path w = save_tiny(dir, 2);
  save_png(testing::noise_image(10, 9, 8), dir / "in.png");
  const Run r = lffn_cli("dump-sffm --weights " + quote(w.string()) + " --input " +
                         quote((dir / "in.png").string()) + " --out " +
                         quote((dir / "w.csv").string()));
  REQUIRE(r.code == 0);
  std::istringstream in(slurp(dir / "w.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> sums(48, 0.0);
  int levels = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    for (int c = 0; c < 48 && std::getline(cells, cell, ','); ++c) sums[c] += std::stod(cell);
    ++levels;
  }
  CHECK(levels == 2);
  for (double s : sums) CHECK(std::abs(s - 1.0) < 1e-6);

  const fs::path nf = save_tiny(dir, 2, Variant::kNoSffm);
  CHECK(lffn_cli("dump-sffm --weights " + quote(nf.string()) + " --input " +
                 quote((dir / "in.png").string()))
            .code == 2);
}

TEST_CASE("selftest passes on a clean build") {
  const Run r = lffn_cli("selftest");
  CHECK(r.code == 0);
  CHECK(r.output.find("selftest passed") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);
}
