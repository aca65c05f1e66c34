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

#include "pynet/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <utility>

#include "pynet/rawio.hpp"

namespace pynet::data {

namespace fs = std::filesystem;

PairDataset PairDataset::open(const std::string& root, const std::string& split) {
  const fs::path list = fs::path(root) / "splits" / (split + ".txt");
  std::ifstream in(list);
  if (!in) throw IoError("cannot open split list: " + list.string());

  PairDataset ds;
  ds.root_ = root;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    ds.names_.push_back(line);
  }
  std::sort(ds.names_.begin(), ds.names_.end());
  for (const auto& name : ds.names_) {
    const fs::path raw = fs::path(root) / "raw" / (name + ".png");
    const fs::path dslr = fs::path(root) / "dslr" / (name + ".png");
    if (!fs::exists(raw)) throw IoError("split entry has no RAW patch: " + raw.string());
    if (!fs::exists(dslr)) throw IoError("split entry has no RGB target: " + dslr.string());
  }
  return ds;
}

PairDataset PairDataset::from_memory(std::vector<Sample> samples) {
  PairDataset ds;
  for (const auto& s : samples) ds.names_.push_back(s.basename);
  ds.memory_ = std::move(samples);
  return ds;
}

Sample PairDataset::load(int index) const {
  if (index < 0 || index >= size()) throw ContractError("dataset index out of range");
  if (!memory_.empty()) return memory_[index];

  const std::string& name = names_[index];
  Sample s;
  s.basename = name;
  rawio::BayerFrame frame =
      rawio::load_raw_mosaic((fs::path(root_) / "raw" / (name + ".png")).string());
  s.raw = rawio::pack_rggb(rawio::normalize(frame)).data;
  s.rgb = rawio::load_rgb((fs::path(root_) / "dslr" / (name + ".png")).string()).data;
  if (s.rgb.dim(0) != 2 * s.raw.dim(0) || s.rgb.dim(1) != 2 * s.raw.dim(1))
    throw MetadataError("pair " + name + " target is not 2x the packed RAW size");
  return s;
}

}  // namespace pynet::data
