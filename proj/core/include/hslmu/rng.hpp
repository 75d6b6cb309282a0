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

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hslmu {

using Rng = std::mt19937_64;

// Named sub-streams of a run's root seed.
namespace streams {
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kShuffle = "shuffle";
inline constexpr std::string_view kResiduals = "residuals";
inline constexpr std::string_view kPermutation = "permutation";
}  // namespace streams

// Mixes a root seed, a stream name and an index into an independent seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

// Uniform on [0, 1) from the top 53 bits; never returns 1.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer on [0, bound) by rejection; bound > 0. Unlike
// std::uniform_int_distribution the sequence is the same on every stdlib.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

// Standard normal via Box-Muller (one draw per call, the sine half is dropped).
double standard_normal(Rng& rng);

}  // namespace hslmu
