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

// Binary checkpoint file, all integers little-endian:
//
//   "HSLMUCKP" | u32 version | u32 n_counters | counters | u32 n_tensors |
//   manifest | f32 payload in manifest order | u32 CRC-32 of all prior bytes
//
//   counter  = u16 name_len | name | i64 value
//   manifest = u16 name_len | name | u8 dtype (1 = f32) | u8 rank | u32 dims[rank]

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hslmu/network.hpp"
#include "hslmu/training.hpp"

namespace hslmu {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlob {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;  // column-major for rank 2

  bool operator==(const TensorBlob&) const = default;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::int64_t>> counters;
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(std::string_view name) const;
  std::optional<std::int64_t> counter(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

// Throws ConfigError on duplicate names or shape/value count mismatch.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
// Throws DataError on bad magic, version, truncation or digest mismatch.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters (rounded to f32), optionally with Adam moments, plus counters
// "schedule.epoch" and "adam.step".
Checkpoint make_checkpoint(const Parameters& params, const AdamState* optimizer, int epoch);

// Copies the stored parameters into `params`, whose shapes define what is
// expected. Throws DataError naming the first missing or mis-shaped tensor.
void restore_parameters(const Checkpoint& checkpoint, Parameters& params);

// Adam moments if present; `config` defines the shapes.
std::optional<AdamState> restore_optimizer(const Checkpoint& checkpoint, const CellConfig& config);

}  // namespace hslmu
