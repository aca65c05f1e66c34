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

#include "pynet/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

#include "pynet/archive.hpp"

namespace pynet::ckpt {
namespace {

constexpr char kMagic[] = "PYNETCK1";

// JSON has no NaN/inf literals (nlohmann emits null); metric fields can
// legitimately be non-finite, so those encode as tagged strings.
nlohmann::json num_to_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double num_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw FormatError("malformed checkpoint metadata: bad numeric string \"" + s + "\"");
  }
  return j.get<double>();
}

nlohmann::json history_to_json(const TrainHistory& h) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : h.steps) {
    nlohmann::json terms = nlohmann::json::object();
    for (const auto& [name, value] : s.terms) terms[name] = num_to_json(value);
    steps.push_back({{"level", s.level},
                     {"epoch", s.epoch},
                     {"step", s.step},
                     {"loss", num_to_json(s.loss)},
                     {"terms", std::move(terms)},
                     {"wall_ms", s.wall_ms}});
  }
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& v : h.vals) {
    vals.push_back({{"level", v.level},
                    {"epoch", v.epoch},
                    {"psnr", num_to_json(v.psnr)},
                    {"ms_ssim", num_to_json(v.ms_ssim)}});
  }
  return {{"steps", steps}, {"vals", vals}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  for (const auto& s : j.at("steps")) {
    StepRecord r;
    r.level = s.at("level").get<int>();
    r.epoch = s.at("epoch").get<int>();
    r.step = s.at("step").get<std::int64_t>();
    r.loss = num_from_json(s.at("loss"));
    for (const auto& [name, value] : s.at("terms").items()) r.terms[name] = num_from_json(value);
    r.wall_ms = s.at("wall_ms").get<double>();
    h.steps.push_back(std::move(r));
  }
  for (const auto& v : j.at("vals")) {
    ValRecord r;
    r.level = v.at("level").get<int>();
    r.epoch = v.at("epoch").get<int>();
    r.psnr = num_from_json(v.at("psnr"));
    r.ms_ssim = num_from_json(v.at("ms_ssim"));
    h.vals.push_back(r);
  }
  return h;
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void TrainHistory::append_csv(const std::string& path, std::size_t steps_written,
                              std::size_t vals_written) const {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open metrics log: " + path);
  if (fresh)
    out << "kind,level,epoch,step,loss,mse,perceptual,ssim,val_psnr,val_msssim,wall_ms\n";
  auto term = [](const StepRecord& s, const char* key) {
    auto it = s.terms.find(key);
    return it == s.terms.end() ? std::string() : csv_num(it->second);
  };
  for (std::size_t i = steps_written; i < steps.size(); ++i) {
    const auto& s = steps[i];
    out << "step," << s.level << ',' << s.epoch << ',' << s.step << ',' << csv_num(s.loss) << ','
        << term(s, "mse") << ',' << term(s, "perceptual") << ',' << term(s, "ssim") << ",,,"
        << csv_num(s.wall_ms) << '\n';
  }
  for (std::size_t i = vals_written; i < vals.size(); ++i) {
    const auto& v = vals[i];
    out << "val," << v.level << ',' << v.epoch << ",,,,,," << csv_num(v.psnr) << ','
        << csv_num(v.ms_ssim) << ",\n";
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json meta;
  meta["format"] = kCheckpointFormat;
  meta["config"] = c.config.to_json();
  meta["trained_level"] = c.trained_level;
  nlohmann::json nc = nlohmann::json::object();
  for (const auto& [level, terms] : c.norm_constants) nc[std::to_string(level)] = terms;
  meta["norm_constants"] = nc;
  if (c.progress) {
    meta["progress"] = {{"level", c.progress->level},
                        {"epoch", c.progress->epoch},
                        {"step", c.progress->step}};
  }
  if (c.opt) meta["adam_t"] = c.opt->t;
  meta["history"] = history_to_json(c.history);

  archive::TensorMap tensors;
  for (const auto& [name, t] : c.params) tensors["p/" + name] = archive::TensorBlob{t, true};
  if (c.opt) {
    for (const auto& [name, t] : c.opt->m) tensors["m/" + name] = archive::TensorBlob{t, false};
    for (const auto& [name, t] : c.opt->v) tensors["v/" + name] = archive::TensorBlob{t, false};
  }
  archive::write_archive(path, kMagic, meta, tensors);
}

Checkpoint load_checkpoint(const std::string& path) {
  archive::Archive a = archive::read_archive(path, kMagic);
  Checkpoint c;
  try {
    if (a.meta.at("format").get<std::string>() != kCheckpointFormat)
      throw FormatError("unsupported checkpoint format tag in " + path);
    c.config = model::PyNetConfig::from_json(a.meta.at("config"));
    c.trained_level = a.meta.at("trained_level").get<int>();
    for (const auto& [key, terms] : a.meta.at("norm_constants").items())
      c.norm_constants[std::stoi(key)] = terms.get<std::map<std::string, double>>();
    if (a.meta.contains("progress")) {
      Progress p;
      p.level = a.meta["progress"].at("level").get<int>();
      p.epoch = a.meta["progress"].at("epoch").get<int>();
      p.step = a.meta["progress"].at("step").get<std::int64_t>();
      c.progress = p;
    }
    if (a.meta.contains("history")) c.history = history_from_json(a.meta["history"]);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  }

  bool has_opt = false;
  OptimizerState opt;
  if (a.meta.contains("adam_t")) {
    opt.t = a.meta["adam_t"].get<std::int64_t>();
    has_opt = true;
  }
  for (auto& [name, blob] : a.tensors) {
    if (name.rfind("p/", 0) == 0) {
      c.params.emplace(name.substr(2), std::move(blob.data));
    } else if (name.rfind("m/", 0) == 0) {
      opt.m.emplace(name.substr(2), std::move(blob.data));
      has_opt = true;
    } else if (name.rfind("v/", 0) == 0) {
      opt.v.emplace(name.substr(2), std::move(blob.data));
      has_opt = true;
    } else {
      throw FormatError("unexpected tensor entry in checkpoint: " + name);
    }
  }
  if (has_opt) c.opt = std::move(opt);
  return c;
}

Checkpoint from_model(const model::PyNetModel& m) {
  Checkpoint c;
  c.config = m.config();
  c.trained_level = m.trained_level();
  for (const auto& name : m.param_names()) c.params.emplace(name, m.param(name));
  return c;
}

model::PyNetModel to_model(const Checkpoint& c) {
  model::PyNetModel m = model::PyNetModel::build(c.config, 0);
  if (c.params.size() != m.param_names().size())
    throw FormatError("checkpoint parameter table does not match its config");
  for (const auto& name : m.param_names()) {
    auto it = c.params.find(name);
    if (it == c.params.end()) throw FormatError("checkpoint missing parameter: " + name);
    Tensor& dst = m.param(name);
    if (!dst.same_shape(it->second))
      throw FormatError("checkpoint parameter shape mismatch for " + name + ": got " +
                        it->second.shape_str() + ", want " + dst.shape_str());
    dst = it->second;
  }
  m.set_trained_level(c.trained_level);
  return m;
}

void require_config(const Checkpoint& c, const model::PyNetConfig& expected) {
  if (!(c.config == expected))
    throw ConfigError("checkpoint was produced by a different model config");
}

void save_checkpoint(const model::PyNetModel& m, const TrainHistory& history,
                     const std::string& path) {
  Checkpoint c = from_model(m);
  c.history = history;
  save_checkpoint(path, c);
}

std::pair<model::PyNetModel, TrainHistory> load_model_checkpoint(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  return {to_model(c), std::move(c.history)};
}

}  // namespace pynet::ckpt
