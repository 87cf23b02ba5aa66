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


// lffn: command-line front end.
//
//   lffn train      --corpus DIR --out W.lffn [--config C.json] [--resume W0]
//   lffn eval       --weights W --corpus DIR [--out report.json]
//   lffn sr         --weights W --input LR.png --out SR.png
//   lffn analyze    [--preset P] [--scale S] [--format text|csv]
//   lffn dump-sffm  --weights W --input IMG.png --out weights.csv
//   lffn selftest
//
// Exit codes: 0 success, 1 internal or numerical failure, 2 usage or path
// error. LFFN_THREADS caps the worker threads.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lffn/analysis.h"
#include "lffn/evaluate.h"
#include "lffn/imaging.h"
#include "lffn/network.h"
#include "lffn/parallel.h"
#include "lffn/selftest.h"
#include "lffn/train.h"
#include "lffn/weight_io.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpecFlags {
  std::optional<std::string> preset;
  std::optional<int> scale;
  std::optional<int> blocks;
  std::optional<int> modules;
  bool depthwise = false;
  std::optional<std::string> variant;
};

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
  cmd->add_option("--preset", f.preset, "lffn, lffn-s, lffn-nf or lffn-ns");
  cmd->add_option("--scale", f.scale, "upscaling factor (2, 3 or 4)");
  cmd->add_option("--blocks", f.blocks, "spindle blocks per module (B)");
  cmd->add_option("--modules", f.modules, "module count (M)");
  cmd->add_flag("--depthwise", f.depthwise, "depthwise 3x3 convs in blocks");
  cmd->add_option("--variant", f.variant, "full, no_sffm or residual_baseline");
}

// Preset first, then JSON keys, then flags.
lffn::NetworkSpec build_spec(const SpecFlags& f,
                             const json& config = json::object()) {
  try {
    const std::string preset = f.preset.value_or(config.value("preset", "lffn"));
    const int scale = f.scale.value_or(config.value("scale", 4));
    lffn::NetworkSpec s = lffn::NetworkSpec::preset(preset, scale);
    s.blocks = f.blocks.value_or(config.value("blocks", s.blocks));
    s.modules = f.modules.value_or(config.value("modules", s.modules));
    s.depthwise = f.depthwise || config.value("depthwise", s.depthwise);
    if (f.variant || config.contains("variant")) {
      s.variant = lffn::parse_variant(
          f.variant.value_or(config.value("variant", std::string("full"))));
      s.backbone_channels = s.variant == lffn::Variant::kResidualBaseline
                                ? s.extended_channels
                                : lffn::NetworkSpec{}.backbone_channels;
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) {
    throw UsageError(what + " directory not found: " + p.string());
  }
}

void require_output(const fs::path& p) {
  const fs::path parent = fs::absolute(p).parent_path();
  if (!fs::is_directory(parent)) {
    throw UsageError("output directory does not exist: " + parent.string());
  }
}

json read_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  require_file(*path, "config");
  std::ifstream in(*path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw UsageError("config must be a JSON object: " + *path);
    return j;
  } catch (const json::exception& e) {
    throw UsageError("config " + *path + ": " + e.what());
  }
}

lffn::Network load_network(const fs::path& path) {
  require_file(path, "weights");
  try {
    lffn::WeightStore store = lffn::load_weights(path);
    const lffn::NetworkSpec spec = lffn::Network::infer_spec(store);
    return lffn::Network(spec, std::move(store));
  } catch (const std::exception& e) {
    throw UsageError("weights " + path.string() + ": " + e.what());
  }
}

void check_scale(const lffn::Network& net, const std::optional<int>& requested) {
  if (requested && *requested != net.spec().scale) {
    throw UsageError("requested scale " + std::to_string(*requested) +
                     " but the weights are for x" +
                     std::to_string(net.spec().scale));
  }
}

void write_text(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + *path);
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  SpecFlags spec;
  std::string corpus;
  std::string out;
  std::optional<std::string> config;
  std::optional<std::string> resume;
  std::optional<std::string> loss_csv;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> iters_per_epoch;
  std::optional<int> batch;
  std::optional<int> patch;
  std::optional<double> lr0;
  int log_every = 50;
};

int cmd_train(const TrainFlags& f) {
  require_dir(f.corpus, "corpus");
  if (lffn::list_pngs(f.corpus).empty()) {
    throw UsageError("no PNG images in corpus directory: " + f.corpus);
  }
  require_output(f.out);
  if (f.loss_csv) require_output(*f.loss_csv);
  if (f.resume) require_file(*f.resume, "weights");
  const json config = read_config(f.config);

  // Fine-tuning starts from a lower default rate; JSON and flags still win.
  lffn::TrainConfig base;
  if (f.resume) base.lr0 = lffn::TrainConfig::kFineTuneLr;
  lffn::TrainConfig cfg;
  try {
    cfg = lffn::train_config_from_json(config, base);
  } catch (const std::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.iterations) cfg.iterations = *f.iterations;
  if (f.iters_per_epoch) cfg.iters_per_epoch = *f.iters_per_epoch;
  if (f.batch) cfg.batch = *f.batch;
  if (f.patch) cfg.lr_patch = *f.patch;
  if (f.lr0) cfg.lr0 = *f.lr0;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::optional<lffn::Network> net;
  if (f.resume) {
    net.emplace(load_network(*f.resume));
    check_scale(*net, f.spec.scale);
  } else {
    net.emplace(lffn::Network::create(build_spec(f.spec, config), cfg.seed));
  }
  std::vector<lffn::ImagePlane> corpus;
  try {
    corpus = lffn::load_corpus(f.corpus);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  const fs::path out(f.out);
  const fs::path best = fs::path(out).replace_extension(".best" + out.extension().string());
  std::fprintf(stderr, "training %s on %zu images, %d threads\n",
               net->spec().label().c_str(), corpus.size(), lffn::num_threads());
  lffn::TrainHooks hooks;
  hooks.on_iteration = [&](const lffn::TrainRecord& r) {
    if (f.log_every > 0 && r.iter % f.log_every == 0) {
      std::fprintf(stderr, "iter %lld epoch %d lr %.3g loss %.6f\n", r.iter,
                   r.epoch, r.lr, r.loss);
    }
  };
  hooks.on_checkpoint = [&](const lffn::WeightStore& w, const lffn::TrainRecord&,
                            bool is_best) {
    lffn::save_weights(w, is_best ? best : out);
  };
  const lffn::TrainResult result = lffn::train_loop(*net, corpus, cfg, hooks);
  lffn::save_weights(net->weights(), out);
  write_text(f.loss_csv.value_or(fs::path(out).replace_extension(".loss.csv").string()),
             lffn::loss_trace_csv(result.trace));
  std::fprintf(stderr, "final loss %.6f, best %.6f\n", result.trace.back().loss,
               result.best_loss);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::optional<std::string> weights;
  std::string corpus;
  std::optional<std::string> out;
  std::optional<int> scale;
  std::string backend = "network";
};

int cmd_eval(const EvalFlags& f) {
  require_dir(f.corpus, "corpus");
  if (f.out) require_output(*f.out);
  lffn::EvalReport report;
  if (f.backend == "identity") {
    report = lffn::evaluate_directory(f.corpus, f.scale.value_or(4),
                                      lffn::identity_backend());
  } else {
    if (!f.weights) throw UsageError("eval needs --weights");
    const lffn::Network net = load_network(*f.weights);
    check_scale(net, f.scale);
    report = lffn::evaluate_directory(f.corpus, net.spec().scale,
                                      lffn::network_backend(net));
  }
  for (const lffn::EvalFailure& e : report.failures) {
    std::fprintf(stderr, "skipped %s: %s\n", e.image.c_str(), e.error.c_str());
  }
  write_text(f.out, report.to_json().dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- sr

struct SrFlags {
  std::string weights;
  std::string input;
  std::string out;
  std::optional<int> scale;
};

int cmd_sr(const SrFlags& f) {
  require_file(f.input, "input image");
  require_output(f.out);
  const lffn::Network net = load_network(f.weights);
  check_scale(net, f.scale);
  lffn::ImagePlane lr;
  try {
    lr = lffn::load_png(f.input);
  } catch (const std::exception& e) {
    throw UsageError(f.input + ": " + e.what());
  }
  lffn::save_png(lffn::super_resolve(net, lr), f.out);
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeFlags {
  SpecFlags spec;
  int hr_width = lffn::kReferenceHrWidth;
  int hr_height = lffn::kReferenceHrHeight;
  std::string format = "text";
  std::optional<std::string> out;
};

int cmd_analyze(const AnalyzeFlags& f) {
  if (f.out) require_output(*f.out);
  const lffn::NetworkSpec spec = build_spec(f.spec);
  lffn::CostReport report;
  try {
    report = lffn::analyze(spec, f.hr_width, f.hr_height);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_text(f.out, f.format == "csv" ? report.to_csv() : report.to_text());
  return 0;
}

// ---------------------------------------------------------------- dump-sffm

struct DumpFlags {
  std::string weights;
  std::string input;
  std::optional<std::string> out;
};

int cmd_dump_sffm(const DumpFlags& f) {
  require_file(f.input, "input image");
  if (f.out) require_output(*f.out);
  const lffn::Network net = load_network(f.weights);
  if (net.spec().variant == lffn::Variant::kNoSffm) {
    throw UsageError("weights are a no_sffm network; there are no fusion weights");
  }
  lffn::ImagePlane img;
  try {
    img = lffn::to_rgb(lffn::load_png(f.input));
  } catch (const std::exception& e) {
    throw UsageError(f.input + ": " + e.what());
  }
  write_text(f.out, lffn::sffm_weights_csv(lffn::dump_sffm_weights(net, img)));
  return 0;
}

// ---------------------------------------------------------------- selftest

int cmd_selftest() {
  int failed = 0;
  const auto start = std::chrono::steady_clock::now();
  lffn::run_selftest([&](const lffn::CheckResult& r) {
    if (!r.passed) ++failed;
    std::printf("%s  %-40s error %.3g (tolerance %.3g)%s%s\n",
                r.passed ? "ok  " : "FAIL", r.name.c_str(), r.error, r.tolerance,
                r.detail.empty() ? "" : "  ", r.detail.c_str());
    std::fflush(stdout);
  });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s in %.1f s\n", failed ? "selftest FAILED" : "selftest passed", secs);
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  lffn::configure_threads_from_env();
  CLI::App app{
      "LFFN single-image super-resolution.\n"
      "Option precedence: command-line flags, then --config JSON, then "
      "built-in defaults.\nExit codes: 0 ok, 1 internal failure, 2 usage or "
      "path error."};
  app.require_subcommand(1);

  TrainFlags train;
  CLI::App* t = app.add_subcommand("train", "train or fine-tune a network");
  add_spec_flags(t, train.spec);
  t->add_option("--corpus", train.corpus, "directory of HR PNGs")->required();
  t->add_option("--out", train.out, "weights file to write")->required();
  t->add_option("--config", train.config, "JSON training config");
  t->add_option("--resume", train.resume,
                "weights to fine-tune (default lr0 becomes 4e-4)");
  t->add_option("--loss-csv", train.loss_csv, "loss trace (default <out>.loss.csv)");
  t->add_option("--seed", train.seed, "RNG seed");
  t->add_option("--iterations", train.iterations, "optimizer steps");
  t->add_option("--iters-per-epoch", train.iters_per_epoch, "steps per epoch");
  t->add_option("--batch", train.batch, "patches per step");
  t->add_option("--patch", train.patch, "LR patch size");
  t->add_option("--lr0", train.lr0, "initial learning rate");
  t->add_option("--log-every", train.log_every, "progress interval (0 = quiet)");

  EvalFlags eval;
  CLI::App* e = app.add_subcommand("eval", "Y-channel PSNR/SSIM over a directory");
  e->add_option("--weights", eval.weights, "weights file");
  e->add_option("--corpus", eval.corpus, "directory of HR PNGs")->required();
  e->add_option("--out", eval.out, "JSON report (default stdout)");
  e->add_option("--scale", eval.scale, "expected scale");
  e->add_option("--backend", eval.backend, "network, or identity (test hook)")
      ->check(CLI::IsMember({"network", "identity"}));

  SrFlags sr;
  CLI::App* s = app.add_subcommand("sr", "super-resolve one image");
  s->add_option("--weights", sr.weights, "weights file")->required();
  s->add_option("--input", sr.input, "LR PNG")->required();
  s->add_option("--out", sr.out, "SR PNG")->required();
  s->add_option("--scale", sr.scale, "expected scale");

  AnalyzeFlags analyze;
  CLI::App* a = app.add_subcommand("analyze", "parameter and Mult-Add report");
  add_spec_flags(a, analyze.spec);
  a->add_option("--hr-width", analyze.hr_width, "HR width (default 1280)");
  a->add_option("--hr-height", analyze.hr_height, "HR height (default 720)");
  a->add_option("--format", analyze.format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));
  a->add_option("--out", analyze.out, "report file (default stdout)");

  DumpFlags dump;
  CLI::App* d = app.add_subcommand("dump-sffm", "per-level fusion weights as CSV");
  d->add_option("--weights", dump.weights, "weights file")->required();
  d->add_option("--input", dump.input, "input PNG")->required();
  d->add_option("--out", dump.out, "CSV file (default stdout)");

  CLI::App* st = app.add_subcommand("selftest", "gradient and oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (s->parsed()) return cmd_sr(sr);
    if (a->parsed()) return cmd_analyze(analyze);
    if (d->parsed()) return cmd_dump_sffm(dump);
    if (st->parsed()) return cmd_selftest();
  } catch (const UsageError& ex) {
    std::fprintf(stderr, "lffn: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "lffn: internal error: %s\n", ex.what());
    return 1;
  }
  return 2;
}
