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

#pragma once

#include <string>
#include <vector>

#include "pynet/common.hpp"

namespace pynet::data {

// One training pair: packed normalized RAW [h,w,4] and its RGB target
// [2h,2w,3] in [0,1].
struct Sample {
  std::string basename;
  Tensor raw;
  Tensor rgb;
};

// Directory layout: <root>/raw/<name>.png (16-bit mosaics), <root>/dslr/
// <name>.png (8-bit RGB), <root>/splits/{train,val,test}.txt with one
// basename per line. RAW and target are paired strictly by basename.
class PairDataset {
 public:
  static PairDataset open(const std::string& root, const std::string& split);
  static PairDataset from_memory(std::vector<Sample> samples);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& basenames() const { return names_; }
  Sample load(int index) const;

 private:
  std::string root_;
  std::vector<std::string> names_;
  std::vector<Sample> memory_;  // non-empty only for from_memory datasets
};

}  // namespace pynet::data
