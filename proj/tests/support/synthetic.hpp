// Copyright 2026 The hslmu Authors
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

// Small synthetic image sets: each digit lights its own band of pixels.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "hslmu/data.hpp"

namespace hslmu::testing {

inline RawMnist synthetic_raw(std::size_t count, std::uint64_t seed, std::uint32_t side = 4,
                              const std::vector<int>& digits = {0, 1, 2}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(0, 40);
  RawMnist raw;
  raw.images.rows = side;
  raw.images.cols = side;
  const std::size_t pixels = side * side;
  const std::size_t band = std::max<std::size_t>(1, pixels / digits.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto cls = i % digits.size();
    raw.labels.push_back(static_cast<std::uint8_t>(digits[cls]));
    for (std::size_t p = 0; p < pixels; ++p) {
      const bool lit = p / band == cls;
      raw.images.pixels.push_back(static_cast<std::uint8_t>((lit ? 200 : 0) + noise(rng)));
    }
  }
  return raw;
}

inline SequenceDataset synthetic_dataset(std::size_t train, std::size_t val, std::size_t test,
                                         std::uint64_t seed = 1) {
  TaskSpec spec;
  spec.classes = {0, 1, 2};
  spec.train_count = train;
  spec.val_count = val;
  spec.test_count = test;
  return make_task(synthetic_raw(train + val, seed), synthetic_raw(test, seed + 1), spec);
}

}  // namespace hslmu::testing
