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

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pynet/trainer.hpp"
#include "test_util.hpp"

using namespace pynet;
using namespace pynet::trainer;

namespace {

model::PyNetConfig tiny_config() {
  model::PyNetConfig cfg;
  cfg.base_channels = {4, 4, 4, 4, 4};
  cfg.kernel_sizes = {3};
  cfg.blocks_per_level = {1, 1, 1, 1, 1};
  return cfg;
}

// Pairs where the RGB target is the flat per-sample mean of the RAW patch;
// a level-5 head can fit this quickly.
data::PairDataset mean_dataset(int n, int side, std::uint64_t seed) {
  std::vector<data::Sample> samples;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    data::Sample s;
    s.basename = "s" + std::to_string(i);
    const double base = rng.uniform(0.25, 0.75);
    s.raw = Tensor({side, side, 4});
    double mean = 0.0;
    for (std::int64_t k = 0; k < s.raw.size(); ++k) {
      s.raw[k] = std::clamp(base + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      mean += s.raw[k];
    }
    mean /= static_cast<double>(s.raw.size());
    s.rgb = Tensor({2 * side, 2 * side, 3}, mean);
    samples.push_back(std::move(s));
  }
  return data::PairDataset::from_memory(std::move(samples));
}

TrainConfig fast_config(int batch, int epochs) {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  for (int l = 0; l <= 5; ++l) {
    cfg.batch_size_per_level[l] = batch;
    cfg.epochs_per_level[l] = epochs;
  }
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("make_level_targets shapes and remap") {
  SECTION("constant half gray maps to zero at every level") {
    Tensor rgb({64, 64, 3}, 0.5);
    auto targets = make_level_targets(rgb);
    REQUIRE(targets.size() == 6);
    REQUIRE(targets.at(0).shape() == std::vector<int>{64, 64, 3});
    REQUIRE(targets.at(1).shape() == std::vector<int>{32, 32, 3});
    REQUIRE(targets.at(5).shape() == std::vector<int>{2, 2, 3});
    for (const auto& [level, t] : targets) {
      REQUIRE(t.min() == 0.0);
      REQUIRE(t.max() == 0.0);
    }
  }
  SECTION("checkerboard averages out everywhere above level 0") {
    Tensor rgb({32, 64, 3});
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = static_cast<double>((y + x) % 2);
    auto targets = make_level_targets(rgb);
    REQUIRE(targets.at(0).min() == -1.0);  // full resolution keeps the 2x-1 extremes
    REQUIRE(targets.at(0).max() == 1.0);
    for (int level = 1; level <= 5; ++level) {
      REQUIRE_THAT(targets.at(level).min(), Catch::Matchers::WithinAbs(0.0, 1e-12));
      REQUIRE_THAT(targets.at(level).max(), Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    REQUIRE(targets.at(5).shape() == std::vector<int>{1, 2, 3});
  }
  SECTION("area averaging matches a block-mean oracle") {
    Tensor rgb = testutil::random_tensor({32, 32, 3}, 50);
    auto targets = make_level_targets(rgb);
    const Tensor& t2 = targets.at(2);  // 8x8, 4x4 blocks
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) {
          double m = 0.0;
          for (int dy = 0; dy < 4; ++dy)
            for (int dx = 0; dx < 4; ++dx) m += rgb.at(4 * y + dy, 4 * x + dx, c);
          m /= 16.0;
          REQUIRE_THAT(t2.at(y, x, c), Catch::Matchers::WithinAbs(2.0 * m - 1.0, 1e-12));
        }
  }
  SECTION("contract violations") {
    REQUIRE_THROWS_AS(make_level_targets(Tensor({48, 64, 3}, 0.5)), ContractError);
    REQUIRE_THROWS_AS(make_level_targets(Tensor({64, 64}, 0.5)), ContractError);
    REQUIRE_THROWS_AS(make_level_targets(Tensor({64, 64, 3}, 1.5)), ContractError);
    REQUIRE_THROWS_AS(make_level_targets(Tensor({16, 16, 3}, 0.5)), ContractError);
  }
}

TEST_CASE("train config validation") {
  REQUIRE_NOTHROW(TrainConfig{}.validate());

  TrainConfig bad;
  bad.learning_rate = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  bad = TrainConfig{};
  bad.batch_size_per_level[3] = 0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
  bad.batch_size_per_level[3] = 65;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  bad = TrainConfig{};
  bad.epochs_per_level[2] = 101;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  bad = TrainConfig{};
  bad.beta2 = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);

  bad = TrainConfig{};
  bad.calibration_batches = 0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("levels must be trained strictly from 5 downward") {
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 1);
  data::PairDataset ds = mean_dataset(4, 32, 2);
  Trainer t(std::move(m), fast_config(2, 1));

  REQUIRE_THROWS_MATCHES(t.train_level(ds, nullptr, 4), ScheduleError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                             "cannot train level 4")));
  REQUIRE_THROWS_AS(t.train_level(ds, nullptr, 6), ContractError);

  t.train_level(ds, nullptr, 5);
  REQUIRE(t.model().trained_level() == 5);
  // Skipping level 4 is rejected.
  REQUIRE_THROWS_AS(t.train_level(ds, nullptr, 3), ScheduleError);
}

TEST_CASE("level-5 training reduces the normalized loss") {
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 3);
  data::PairDataset ds = mean_dataset(16, 32, 4);

  auto [trained, history] = train_level(std::move(m), ds, 5, fast_config(4, 6), nullptr);
  REQUIRE(trained.trained_level() == 5);
  REQUIRE(history.steps.size() == 24);  // 4 batches x 6 epochs

  // Normalization makes the first losses sit near 1; require a clear drop.
  const double first = history.steps.front().loss;
  const double last = history.steps.back().loss;
  REQUIRE(first > 0.0);
  REQUIRE(last < 0.5 * first);

  // Step records carry the raw mse term and monotone global indices.
  REQUIRE(history.steps.front().terms.count("mse") == 1);
  for (size_t i = 1; i < history.steps.size(); ++i) {
    REQUIRE(history.steps[i].step == history.steps[i - 1].step + 1);
  }
}

TEST_CASE("gradients stay inside the active level scope") {
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 5);
  const model::PyNetModel before = m;
  data::PairDataset ds = mean_dataset(4, 32, 6);

  Trainer t(std::move(m), fast_config(4, 1));
  t.train_level(ds, nullptr, 5);

  // Parameters outside the level-5 scope must be untouched.
  auto scope = t.model().level_param_names(5);
  std::set<std::string> in_scope(scope.begin(), scope.end());
  bool scoped_changed = false;
  for (const auto& name : t.model().param_names()) {
    const double diff = testutil::max_abs_diff(before.param(name), t.model().param(name));
    if (in_scope.count(name)) {
      scoped_changed = scoped_changed || diff > 0.0;
    } else {
      REQUIRE(diff == 0.0);
    }
  }
  REQUIRE(scoped_changed);
}

TEST_CASE("checkpoints round-trip the whole training state") {
  testutil::TempDir tmp("trainer-ckpt");
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 7);
  data::PairDataset ds = mean_dataset(8, 32, 8);

  TrainConfig cfg = fast_config(4, 2);
  Trainer t(std::move(m), cfg);
  t.train_level(ds, &ds, 5);
  const std::string path = tmp.str("state.ckpt");
  t.save(path);

  ckpt::Checkpoint c = ckpt::load_checkpoint(path);
  REQUIRE(c.config == tiny_config());
  REQUIRE(c.trained_level == 5);
  REQUIRE(c.norm_constants.count(5) == 1);
  REQUIRE(c.norm_constants.at(5).count("mse") == 1);
  REQUIRE(c.norm_constants.at(5).at("mse") > 0.0);
  REQUIRE(c.history.steps.size() == t.history().steps.size());
  REQUIRE(c.history.vals.size() == 2);
  REQUIRE_FALSE(c.progress.has_value());  // the level completed

  model::PyNetModel back = ckpt::to_model(c);
  REQUIRE(back.trained_level() == 5);
  for (const auto& name : back.param_names()) {
    REQUIRE(testutil::max_abs_diff(back.param(name), t.model().param(name)) == 0.0);
  }

  SECTION("model-only helpers") {
    const std::string p2 = tmp.str("model.ckpt");
    ckpt::save_checkpoint(t.model(), t.history(), p2);
    auto [m2, h2] = ckpt::load_model_checkpoint(p2);
    REQUIRE(m2.trained_level() == 5);
    REQUIRE(h2.steps.size() == t.history().steps.size());
  }
  SECTION("config guard") {
    model::PyNetConfig other = tiny_config();
    other.base_channels = {4, 4, 4, 4, 8};
    REQUIRE_THROWS_AS(ckpt::require_config(c, other), ConfigError);
    REQUIRE_THROWS_AS(Trainer::resume(path, cfg, nullptr, &other), ConfigError);
  }
  SECTION("corrupt file") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    REQUIRE_THROWS_AS(ckpt::load_checkpoint(path), FormatError);
  }
  SECTION("wrong magic") {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOTACKPTxxxxxxxxxxxxxxxx";
    f.close();
    REQUIRE_THROWS_AS(ckpt::load_checkpoint(path), FormatError);
  }
}

TEST_CASE("resume from a mid-level checkpoint reproduces the straight run") {
  testutil::TempDir tmp("trainer-resume");
  data::PairDataset ds = mean_dataset(8, 32, 9);

  TrainConfig cfg = fast_config(4, 2);
  cfg.checkpoint_dir = tmp.str("ckpts");

  // Straight run: two epochs in one go. The epoch-0 checkpoint is written
  // along the way.
  Trainer a(model::PyNetModel::build(tiny_config(), 11), cfg);
  a.train_level(ds, nullptr, 5);
  REQUIRE(std::filesystem::exists(tmp.str("ckpts/ckpt-l5-e0.ckpt")));
  REQUIRE(std::filesystem::exists(tmp.str("ckpts/ckpt-l5-final.ckpt")));

  // Resumed run: restart from the epoch-0 snapshot and finish the level.
  Trainer b = Trainer::resume(tmp.str("ckpts/ckpt-l5-e0.ckpt"), cfg);
  REQUIRE(b.history().steps.size() == 2);  // epoch 0 only
  b.train_level(ds, nullptr, 5);

  REQUIRE(b.model().trained_level() == 5);
  REQUIRE(b.history().steps.size() == a.history().steps.size());
  for (const auto& name : a.model().param_names()) {
    REQUIRE(testutil::max_abs_diff(a.model().param(name), b.model().param(name)) == 0.0);
  }
  // Loss trajectories coincide step by step after the restart point.
  for (size_t i = 0; i < a.history().steps.size(); ++i) {
    REQUIRE(a.history().steps[i].loss == b.history().steps[i].loss);
    REQUIRE(a.history().steps[i].step == b.history().steps[i].step);
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic checkpoint") {
  testutil::TempDir tmp("trainer-nan");
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 13);
  Tensor& w = m.param("head5.w");
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = std::numeric_limits<double>::quiet_NaN();

  data::PairDataset ds = mean_dataset(4, 32, 14);
  TrainConfig cfg = fast_config(2, 1);
  cfg.checkpoint_dir = tmp.str("ckpts");

  Trainer t(std::move(m), cfg);
  REQUIRE_THROWS_MATCHES(t.train_level(ds, nullptr, 5), Error,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                             "non-finite loss")));
  REQUIRE(std::filesystem::exists(tmp.str("ckpts/diag-nan-l5.ckpt")));
}

TEST_CASE("metrics csv is appended with a stable header") {
  testutil::TempDir tmp("trainer-csv");
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 15);
  data::PairDataset ds = mean_dataset(4, 32, 16);

  TrainConfig cfg = fast_config(2, 2);
  cfg.metrics_csv = tmp.str("metrics.csv");
  Trainer t(std::move(m), cfg);
  t.train_level(ds, &ds, 5);

  std::ifstream f(cfg.metrics_csv);
  REQUIRE(f.good());
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "kind,level,epoch,step,loss,mse,perceptual,ssim,val_psnr,val_msssim,wall_ms");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) ++rows;
  }
  // 2 epochs x 2 batches of steps plus one validation row per epoch.
  REQUIRE(rows == 6);
}

TEST_CASE("progressive schedule walks 5 down to 0 and enables inference") {
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 17);
  data::PairDataset ds = mean_dataset(4, 32, 18);
  losses::FeatureExtractor fx = losses::FeatureExtractor::random_small(19);

  TrainConfig cfg = fast_config(4, 1);
  cfg.max_steps_per_level = 1;
  model::PyNetModel trained = train_progressive(std::move(m), ds, cfg, &fx);
  REQUIRE(trained.trained_level() == 0);

  rawio::PackedRaw raw;
  raw.data = testutil::random_tensor({32, 32, 4}, 20);
  rawio::RgbImage img = trained.infer_full(raw, 32, 0);
  REQUIRE(img.data.shape() == std::vector<int>{64, 64, 3});

  // A second progressive pass over a finished model is a no-op.
  data::PairDataset ds2 = mean_dataset(2, 32, 21);
  Trainer again(std::move(trained), cfg, &fx);
  again.train_progressive(ds2, nullptr);
  REQUIRE(again.history().steps.empty());
}

TEST_CASE("perceptual levels refuse to train without an extractor") {
  model::PyNetModel m = model::PyNetModel::build(tiny_config(), 22);
  data::PairDataset ds = mean_dataset(2, 32, 23);
  TrainConfig cfg = fast_config(2, 1);
  cfg.max_steps_per_level = 1;

  Trainer t(std::move(m), cfg);  // no extractor configured
  t.train_level(ds, nullptr, 5);
  t.train_level(ds, nullptr, 4);
  REQUIRE_THROWS_AS(t.train_level(ds, nullptr, 3), ConfigError);
}
