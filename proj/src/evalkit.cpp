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

#include "pynet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pynet/losses.hpp"
#include "pynet/rawio.hpp"

namespace pynet::evalkit {
namespace {

std::string fmt(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

EvalResult evaluate(const InferFn& infer, const data::PairDataset& test,
                    const std::string& model_name) {
  if (test.size() == 0) throw ContractError("evaluate needs a non-empty test set");
  EvalResult r;
  r.model_name = model_name;
  double psnr_sum = 0.0, ms_sum = 0.0;
  for (int i = 0; i < test.size(); ++i) {
    data::Sample s = test.load(i);
    Tensor pred = infer(s.raw);
    if (!pred.same_shape(s.rgb))
      throw ContractError("inference output " + pred.shape_str() + " does not match target " +
                          s.rgb.shape_str());
    PerImage rec;
    rec.name = s.basename;
    rec.psnr = losses::psnr(pred, s.rgb, 1.0);
    rec.ms_ssim = losses::ms_ssim(pred, s.rgb, losses::SsimOptions{});
    psnr_sum += rec.psnr;
    ms_sum += rec.ms_ssim;
    r.per_image.push_back(std::move(rec));
  }
  r.n_images = test.size();
  r.avg_psnr = psnr_sum / r.n_images;
  r.avg_msssim = ms_sum / r.n_images;
  return r;
}

EvalResult evaluate(const model::PyNetModel& m, const data::PairDataset& test,
                    const std::string& model_name, int tile, int overlap) {
  if (m.trained_level() != 0)
    throw ContractError("evaluate needs a model trained through level 0");
  InferFn infer = [&](const Tensor& raw) {
    rawio::PackedRaw packed;
    packed.data = raw;
    return m.infer_full(packed, tile, overlap).data;
  };
  return evaluate(infer, test, model_name);
}

std::string report_table(const std::vector<EvalResult>& results) {
  if (results.empty()) throw ContractError("report_table needs at least one result");
  std::vector<const EvalResult*> rows;
  for (const auto& r : results) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const EvalResult* a, const EvalResult* b) {
    if (std::isnan(a->avg_psnr)) return false;
    if (std::isnan(b->avg_psnr)) return true;
    return a->avg_psnr > b->avg_psnr;
  });
  std::size_t name_w = 6;
  for (const auto* r : rows) name_w = std::max(name_w, r->model_name.size());

  std::ostringstream out;
  out << "Method";
  out << std::string(name_w - 6, ' ') << "  PSNR    MS-SSIM\n";
  for (const auto* r : rows) {
    out << r->model_name << std::string(name_w - r->model_name.size(), ' ') << "  "
        << fmt(r->avg_psnr, 2) << "   " << fmt(r->avg_msssim, 4) << '\n';
  }
  return out.str();
}

void write_csv(const std::string& path, const EvalResult& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write results CSV: " + path);
  out << "model,image,psnr,ms_ssim\n";
  for (const auto& p : r.per_image) {
    out << r.model_name << ',' << p.name << ',' << fmt(p.psnr, 6) << ',' << fmt(p.ms_ssim, 6)
        << '\n';
  }
}

EvalResult read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read results CSV: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("model,image,psnr,ms_ssim", 0) != 0)
    throw FormatError("unrecognized results CSV header in " + path);
  EvalResult r;
  double psnr_sum = 0.0, ms_sum = 0.0;
  auto parse_num = [&](const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw FormatError("bad number in results CSV: " + s);
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string model, image, psnr, ms;
    if (!std::getline(ss, model, ',') || !std::getline(ss, image, ',') ||
        !std::getline(ss, psnr, ',') || !std::getline(ss, ms))
      throw FormatError("malformed results CSV row: " + line);
    if (r.model_name.empty()) r.model_name = model;
    PerImage rec{image, parse_num(psnr), parse_num(ms)};
    psnr_sum += rec.psnr;
    ms_sum += rec.ms_ssim;
    r.per_image.push_back(std::move(rec));
  }
  if (r.per_image.empty()) throw FormatError("results CSV has no rows: " + path);
  r.n_images = static_cast<int>(r.per_image.size());
  r.avg_psnr = psnr_sum / r.n_images;
  r.avg_msssim = ms_sum / r.n_images;
  return r;
}

}  // namespace pynet::evalkit
