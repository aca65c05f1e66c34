// Copyright (c) 2026 The pynet-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <limits>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pynet/alignkit.hpp"
#include "pynet/checkpoint.hpp"
#include "pynet/common.hpp"
#include "pynet/dataset.hpp"
#include "pynet/evalkit.hpp"
#include "pynet/losses.hpp"
#include "pynet/model.hpp"
#include "pynet/rawio.hpp"
#include "pynet/trainer.hpp"

namespace fs = std::filesystem;
using pynet::Tensor;

namespace {

// Refuses to clobber an existing output unless --force was given. Treated
// as a usage error so it maps to exit code 1.
void guard_overwrite(const std::string& path, bool force, bool dir_ok_if_empty = false) {
  if (!fs::exists(path)) return;
  if (force) return;
  if (dir_ok_if_empty && fs::is_directory(path) && fs::is_empty(path)) return;
  throw CLI::ValidationError("--out", "refusing to overwrite existing " + path +
                                          " (pass --force to allow)");
}

void log_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cerr << "[" << cmd << "] resolved config:";
  for (const auto& [k, v] : kv) std::cerr << ' ' << k << '=' << v;
  std::cerr << '\n';
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

// Key-value config file, one `key = value` per line, # comments. Keys
// mirror TrainConfig plus model.* extensions; unknown keys are errors.
struct FileConfig {
  pynet::trainer::TrainConfig train;
  pynet::model::PyNetConfig model;
};

FileConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pynet::IoError("cannot open config file: " + path);
  FileConfig fc;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw pynet::ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "learning_rate") fc.train.learning_rate = std::stod(val);
      else if (key == "beta1") fc.train.beta1 = std::stod(val);
      else if (key == "beta2") fc.train.beta2 = std::stod(val);
      else if (key == "adam_epsilon") fc.train.adam_epsilon = std::stod(val);
      else if (key == "seed") fc.train.seed = std::stoull(val);
      else if (key == "checkpoint_every_steps") fc.train.checkpoint_every_steps = std::stoi(val);
      else if (key == "max_steps_per_level") fc.train.max_steps_per_level = std::stoi(val);
      else if (key == "calibration_batches") fc.train.calibration_batches = std::stoi(val);
      else if (key == "val_cap") fc.train.val_cap = std::stoi(val);
      else if (key.rfind("batch_size.", 0) == 0)
        fc.train.batch_size_per_level[std::stoi(key.substr(11))] = std::stoi(val);
      else if (key.rfind("epochs.", 0) == 0)
        fc.train.epochs_per_level[std::stoi(key.substr(7))] = std::stoi(val);
      else if (key == "model.base_channels") fc.model.base_channels = parse_int_list(val);
      else if (key == "model.kernel_sizes") fc.model.kernel_sizes = parse_int_list(val);
      else if (key == "model.blocks_per_level") fc.model.blocks_per_level = parse_int_list(val);
      else if (key == "model.leaky_slope") fc.model.leaky_slope = std::stod(val);
      else if (key == "model.instance_norm_epsilon") fc.model.instance_norm_epsilon = std::stod(val);
      else if (key == "model.instance_norm_levels") {
        auto v = parse_int_list(val);
        fc.model.instance_norm_levels = std::set<int>(v.begin(), v.end());
      } else {
        throw pynet::ConfigError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
      }
    } catch (const std::invalid_argument&) {
      throw pynet::ConfigError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      throw pynet::ConfigError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  return fc;
}

// ---------------------------------------------------------------------------
// build-dataset

struct BuildArgs {
  std::string raw_dir, dslr_dir, out;
  double threshold = 0.9;
  std::uint64_t seed = 0;
  int window = 448;
  double max_shift = 8.0, shift_step = 1.0, max_rotation = 1.5, rotation_step = 0.5;
  int workers = 1;
  bool skip_global = false;
  double val_frac = 0.1, test_frac = 0.1;
  bool force = false;
};

int run_build_dataset(const BuildArgs& a) {
  log_config("build-dataset", {{"raw_dir", a.raw_dir},
                               {"dslr_dir", a.dslr_dir},
                               {"out", a.out},
                               {"threshold", std::to_string(a.threshold)},
                               {"window", std::to_string(a.window)},
                               {"max_shift", std::to_string(a.max_shift)},
                               {"max_rotation", std::to_string(a.max_rotation)},
                               {"workers", std::to_string(a.workers)},
                               {"skip_global", a.skip_global ? "1" : "0"},
                               {"seed", std::to_string(a.seed)}});

  pynet::align::AlignmentConfig cfg;
  cfg.window = a.window;
  cfg.accept_threshold = a.threshold;
  cfg.max_shift = a.max_shift;
  cfg.shift_step = a.shift_step;
  cfg.max_rotation = a.max_rotation;
  cfg.rotation_step = a.rotation_step;
  cfg.workers = a.workers;
  cfg.seed = a.seed;
  cfg.validate();

  std::vector<std::string> captures;
  for (const auto& entry : fs::directory_iterator(a.raw_dir)) {
    if (entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    if (fs::exists(fs::path(a.dslr_dir) / (stem + ".png"))) captures.push_back(stem);
  }
  std::sort(captures.begin(), captures.end());
  if (captures.empty())
    throw pynet::IoError("no matching RAW/DSLR capture pairs under " + a.raw_dir + " and " +
                         a.dslr_dir);

  fs::create_directories(fs::path(a.out) / "raw");
  fs::create_directories(fs::path(a.out) / "dslr");
  fs::create_directories(fs::path(a.out) / "splits");

  std::ofstream manifest(fs::path(a.out) / "manifest.csv");
  if (!manifest) throw pynet::IoError("cannot write manifest.csv under " + a.out);
  manifest << "basename,source_id,dx,dy,rotation,ncc\n";

  std::vector<std::string> admitted;
  std::int64_t windows_total = 0;
  for (const auto& stem : captures) {
    pynet::rawio::BayerFrame frame =
        pynet::rawio::load_raw_mosaic((fs::path(a.raw_dir) / (stem + ".png")).string());
    pynet::rawio::RgbImage dslr =
        pynet::rawio::load_rgb((fs::path(a.dslr_dir) / (stem + ".png")).string());

    pynet::rawio::RgbImage on_grid;
    if (a.skip_global) {
      on_grid = std::move(dslr);
    } else {
      const pynet::rawio::RgbImage ref = pynet::rawio::visualize_raw(pynet::rawio::normalize(frame));
      pynet::align::GlobalAlignResult ga;
      try {
        ga = pynet::align::global_align(dslr, ref, a.seed);
      } catch (const pynet::RegistrationError& e) {
        std::cerr << "skipping capture " << stem << ": " << e.what() << '\n';
        continue;
      }
      on_grid = std::move(ga.warped);
    }

    windows_total += static_cast<std::int64_t>(frame.height() / cfg.window) *
                     (frame.width() / cfg.window);
    const auto pairs = pynet::align::extract_patch_pairs(frame, on_grid, cfg, stem);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      const std::string base = stem + "_p" + std::to_string(i);
      pynet::rawio::save_raw_mosaic(p.raw_patch, (fs::path(a.out) / "raw" / (base + ".png")).string());
      pynet::rawio::save_rgb(p.rgb_patch, (fs::path(a.out) / "dslr" / (base + ".png")).string());
      manifest << base << ',' << p.source_id << ',' << p.dx << ',' << p.dy << ',' << p.rotation
               << ',' << p.ncc_score << '\n';
      admitted.push_back(base);
    }
  }

  // Seeded split assignment so rebuilds are reproducible.
  std::vector<std::string> shuffled = admitted;
  pynet::Rng rng(a.seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
  const int n = static_cast<int>(shuffled.size());
  const int n_test = static_cast<int>(n * a.test_frac);
  const int n_val = static_cast<int>(n * a.val_frac);
  auto write_split = [&](const std::string& name, int begin, int end) {
    std::ofstream out(fs::path(a.out) / "splits" / (name + ".txt"));
    std::vector<std::string> names(shuffled.begin() + begin, shuffled.begin() + end);
    std::sort(names.begin(), names.end());
    for (const auto& s : names) out << s << '\n';
  };
  write_split("test", 0, n_test);
  write_split("val", n_test, n_test + n_val);
  write_split("train", n_test + n_val, n);

  const std::int64_t rejected = windows_total - n;
  const double rate = windows_total > 0 ? static_cast<double>(rejected) / windows_total : 0.0;
  std::cout << "captures=" << captures.size() << " windows=" << windows_total
            << " admitted=" << n << " rejected=" << rejected << " rejection_rate=" << rate
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, config, resume, out_dir, metrics;
  int level = -1;  // -1: full progressive schedule
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch, max_steps;
  std::string extractor_path;
  std::optional<std::uint64_t> random_extractor;
  std::string base_channels, blocks, kernels;
};

int run_train(const TrainArgs& a) {
  FileConfig fc;
  if (!a.config.empty()) fc = parse_config_file(a.config);
  // Flags win over config-file values.
  if (a.lr) fc.train.learning_rate = *a.lr;
  if (a.seed) fc.train.seed = *a.seed;
  if (a.epochs)
    for (auto& [k, v] : fc.train.epochs_per_level) v = *a.epochs;
  if (a.batch)
    for (auto& [k, v] : fc.train.batch_size_per_level) v = *a.batch;
  if (a.max_steps) fc.train.max_steps_per_level = *a.max_steps;
  if (!a.base_channels.empty()) fc.model.base_channels = parse_int_list(a.base_channels);
  if (!a.blocks.empty()) fc.model.blocks_per_level = parse_int_list(a.blocks);
  if (!a.kernels.empty()) fc.model.kernel_sizes = parse_int_list(a.kernels);
  fc.train.checkpoint_dir = a.out_dir;
  fc.train.metrics_csv = a.metrics;
  fc.model.validate();
  fc.train.validate();

  std::string fx_path = a.extractor_path;
  if (fx_path.empty()) {
    if (const char* env = std::getenv("PYNET_FX_WEIGHTS")) fx_path = env;
  }
  std::optional<pynet::losses::FeatureExtractor> fx;
  if (a.random_extractor) {
    fx = pynet::losses::FeatureExtractor::random_small(*a.random_extractor);
  } else if (!fx_path.empty()) {
    fx = pynet::losses::FeatureExtractor::load(fx_path);
  }

  log_config("train", {{"data", a.data},
                       {"config", a.config.empty() ? "<none>" : a.config},
                       {"resume", a.resume.empty() ? "<none>" : a.resume},
                       {"level", a.level < 0 ? "all" : std::to_string(a.level)},
                       {"lr", std::to_string(fc.train.learning_rate)},
                       {"seed", std::to_string(fc.train.seed)},
                       {"out_dir", a.out_dir},
                       {"extractor", fx ? (a.random_extractor ? "random" : fx_path) : "<none>"}});

  pynet::data::PairDataset train = pynet::data::PairDataset::open(a.data, "train");
  std::optional<pynet::data::PairDataset> val;
  if (fs::exists(fs::path(a.data) / "splits" / "val.txt")) {
    auto v = pynet::data::PairDataset::open(a.data, "val");
    if (v.size() > 0) val = std::move(v);
  }

  const pynet::losses::FeatureExtractor* fx_ptr = fx ? &*fx : nullptr;
  std::optional<pynet::trainer::Trainer> tr;
  if (!a.resume.empty()) {
    tr = pynet::trainer::Trainer::resume(a.resume, fc.train, fx_ptr, &fc.model);
  } else {
    tr.emplace(pynet::model::PyNetModel::build(fc.model, fc.train.seed), fc.train, fx_ptr);
  }

  const pynet::data::PairDataset* val_ptr = val ? &*val : nullptr;
  if (a.level >= 0) {
    tr->train_level(train, val_ptr, a.level);
  } else {
    tr->train_progressive(train, val_ptr);
  }
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    tr->save((fs::path(a.out_dir) / "latest.ckpt").string());
    std::cout << "checkpoint: " << (fs::path(a.out_dir) / "latest.ckpt").string() << '\n';
  }
  std::cout << "trained_level=" << tr->model().trained_level() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / infer / visualize-raw / report

struct EvalArgs {
  std::string data, ckpt, split = "test", out, name = "pynet";
  int tile = 448, overlap = 64;
  bool force = false;
};

int run_evaluate(const EvalArgs& a) {
  log_config("evaluate", {{"data", a.data},
                          {"ckpt", a.ckpt},
                          {"split", a.split},
                          {"tile", std::to_string(a.tile)},
                          {"overlap", std::to_string(a.overlap)}});
  if (!a.out.empty()) guard_overwrite(a.out, a.force);
  pynet::model::PyNetModel m = pynet::ckpt::to_model(pynet::ckpt::load_checkpoint(a.ckpt));
  pynet::data::PairDataset test = pynet::data::PairDataset::open(a.data, a.split);
  pynet::evalkit::EvalResult r = pynet::evalkit::evaluate(m, test, a.name, a.tile, a.overlap);
  std::cout << pynet::evalkit::report_table({r});
  if (!a.out.empty()) pynet::evalkit::write_csv(a.out, r);
  return 0;
}

struct InferArgs {
  std::string ckpt, raw, out;
  int tile = 448, overlap = 64;
  bool force = false;
};

int run_infer(const InferArgs& a) {
  log_config("infer", {{"ckpt", a.ckpt},
                       {"raw", a.raw},
                       {"out", a.out},
                       {"tile", std::to_string(a.tile)},
                       {"overlap", std::to_string(a.overlap)}});
  guard_overwrite(a.out, a.force);
  pynet::model::PyNetModel m = pynet::ckpt::to_model(pynet::ckpt::load_checkpoint(a.ckpt));
  pynet::rawio::BayerFrame frame = pynet::rawio::load_raw_mosaic(a.raw);
  pynet::rawio::PackedRaw packed = pynet::rawio::pack_rggb(pynet::rawio::normalize(frame));
  pynet::rawio::RgbImage rgb = m.infer_full(packed, a.tile, a.overlap);
  pynet::rawio::save_rgb(rgb, a.out);
  std::cout << "wrote " << a.out << " (" << rgb.height() << "x" << rgb.width() << ")\n";
  return 0;
}

struct VisArgs {
  std::string raw, out;
  bool force = false;
};

int run_visualize(const VisArgs& a) {
  log_config("visualize-raw", {{"raw", a.raw}, {"out", a.out}});
  guard_overwrite(a.out, a.force);
  pynet::rawio::BayerFrame frame = pynet::rawio::load_raw_mosaic(a.raw);
  pynet::rawio::RgbImage rgb = pynet::rawio::visualize_raw(pynet::rawio::normalize(frame));
  pynet::rawio::save_rgb(rgb, a.out);
  std::cout << "wrote " << a.out << " (" << rgb.height() << "x" << rgb.width() << ")\n";
  return 0;
}

struct ReportArgs {
  std::vector<std::string> results;
};

int run_report(const ReportArgs& a) {
  log_config("report", {{"results", std::to_string(a.results.size()) + " files"}});
  std::vector<pynet::evalkit::EvalResult> rs;
  for (const auto& path : a.results) rs.push_back(pynet::evalkit::read_csv(path));
  std::cout << pynet::evalkit::report_table(rs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pynet: learned ISP toolkit (RAW to RGB)"};
  app.require_subcommand(1);
  int rc = 0;

  BuildArgs build;
  CLI::App* cmd_build = app.add_subcommand("build-dataset", "Align captures and extract patch pairs");
  cmd_build->add_option("--raw-dir", build.raw_dir, "Directory of RAW mosaic PNGs")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_build->add_option("--dslr-dir", build.dslr_dir, "Directory of DSLR RGB PNGs")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_build->add_option("--out", build.out, "Output dataset directory")->required();
  cmd_build->add_option("--threshold", build.threshold, "NCC acceptance threshold")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
  cmd_build->add_option("--seed", build.seed, "Seed for RANSAC and split shuffling");
  cmd_build->add_option("--window", build.window, "Patch window in mosaic pixels");
  cmd_build->add_option("--max-shift", build.max_shift, "Search radius, pixels");
  cmd_build->add_option("--shift-step", build.shift_step, "Shift grid step, pixels");
  cmd_build->add_option("--max-rotation", build.max_rotation, "Search radius, degrees");
  cmd_build->add_option("--rotation-step", build.rotation_step, "Rotation grid step, degrees");
  cmd_build->add_option("--workers", build.workers, "Parallel refinement workers");
  cmd_build->add_flag("--skip-global", build.skip_global,
                      "Treat the DSLR image as already on the RAW grid");
  cmd_build->add_option("--val-frac", build.val_frac, "Validation split fraction");
  cmd_build->add_option("--test-frac", build.test_frac, "Test split fraction");
  cmd_build->add_flag("--force", build.force, "Overwrite an existing output directory");
  cmd_build->callback([&] {
    guard_overwrite(build.out, build.force, true);
    rc = run_build_dataset(build);
  });

  TrainArgs train;
  CLI::App* cmd_train = app.add_subcommand("train", "Run the progressive training schedule");
  cmd_train->add_option("--data", train.data, "Dataset root directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_train->add_option("--config", train.config, "Key-value config file")
      ->check(CLI::ExistingFile);
  cmd_train->add_option("--resume", train.resume, "Checkpoint to resume from")
      ->check(CLI::ExistingFile);
  cmd_train->add_option("--level", train.level, "Train only this level (0..5)")
      ->check(CLI::Range(0, 5));
  cmd_train->add_option("--out-dir", train.out_dir, "Checkpoint directory");
  cmd_train->add_option("--metrics", train.metrics, "Append-only metrics CSV");
  double lr_flag = 0.0;
  auto* lr_opt = cmd_train->add_option("--lr", lr_flag, "Learning rate");
  std::uint64_t seed_flag = 0;
  auto* seed_opt = cmd_train->add_option("--seed", seed_flag, "Training seed");
  int epochs_flag = 0, batch_flag = 0, max_steps_flag = 0;
  auto* epochs_opt = cmd_train->add_option("--epochs", epochs_flag, "Epochs for every level");
  auto* batch_opt = cmd_train->add_option("--batch", batch_flag, "Batch size for every level");
  auto* steps_opt = cmd_train->add_option("--max-steps", max_steps_flag, "Step cap per level");
  cmd_train->add_option("--extractor", train.extractor_path,
                        "Feature-extractor archive (default: $PYNET_FX_WEIGHTS)");
  std::uint64_t rnd_fx_flag = 0;
  auto* rnd_fx_opt = cmd_train->add_option("--random-extractor", rnd_fx_flag,
                                           "Use a random small extractor with this seed");
  cmd_train->add_option("--base-channels", train.base_channels, "Comma list of five widths");
  cmd_train->add_option("--blocks", train.blocks, "Comma list of five block counts");
  cmd_train->add_option("--kernels", train.kernels, "Comma list of branch kernel sizes");
  cmd_train->callback([&] {
    if (*lr_opt) train.lr = lr_flag;
    if (*seed_opt) train.seed = seed_flag;
    if (*epochs_opt) train.epochs = epochs_flag;
    if (*batch_opt) train.batch = batch_flag;
    if (*steps_opt) train.max_steps = max_steps_flag;
    if (*rnd_fx_opt) train.random_extractor = rnd_fx_flag;
    rc = run_train(train);
  });

  EvalArgs eval;
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
  cmd_eval->add_option("--data", eval.data, "Dataset root directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmd_eval->add_option("--ckpt", eval.ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--split", eval.split, "Dataset split to score");
  cmd_eval->add_option("--out", eval.out, "Per-image results CSV");
  cmd_eval->add_option("--name", eval.name, "Row label for the report table");
  cmd_eval->add_option("--tile", eval.tile, "Inference tile, packed pixels");
  cmd_eval->add_option("--overlap", eval.overlap, "Tile overlap, packed pixels");
  cmd_eval->add_flag("--force", eval.force, "Overwrite an existing results CSV");
  cmd_eval->callback([&] { rc = run_evaluate(eval); });

  InferArgs infer;
  CLI::App* cmd_infer = app.add_subcommand("infer", "Reconstruct RGB from a RAW mosaic");
  cmd_infer->add_option("--ckpt", infer.ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cmd_infer->add_option("--raw", infer.raw, "RAW mosaic PNG")->required()->check(CLI::ExistingFile);
  cmd_infer->add_option("--out", infer.out, "Output PNG")->required();
  cmd_infer->add_option("--tile", infer.tile, "Inference tile, packed pixels");
  cmd_infer->add_option("--overlap", infer.overlap, "Tile overlap, packed pixels");
  cmd_infer->add_flag("--force", infer.force, "Overwrite an existing output");
  cmd_infer->callback([&] { rc = run_infer(infer); });

  VisArgs vis;
  CLI::App* cmd_vis = app.add_subcommand("visualize-raw", "Crude demosaic preview of a RAW mosaic");
  cmd_vis->add_option("--raw", vis.raw, "RAW mosaic PNG")->required()->check(CLI::ExistingFile);
  cmd_vis->add_option("--out", vis.out, "Output PNG")->required();
  cmd_vis->add_flag("--force", vis.force, "Overwrite an existing output");
  cmd_vis->callback([&] { rc = run_visualize(vis); });

  ReportArgs report;
  CLI::App* cmd_report = app.add_subcommand("report", "Combine evaluation CSVs into one table");
  cmd_report->add_option("--results", report.results, "Results CSVs from `evaluate`")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_report->callback([&] { rc = run_report(report); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const pynet::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}
