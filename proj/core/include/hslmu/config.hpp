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

// INI run configuration with sections [run], [data], [network], [schedule]
// and [training]. Unknown sections or keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "hslmu/data.hpp"
#include "hslmu/network.hpp"
#include "hslmu/training.hpp"

namespace hslmu {

inline constexpr std::string_view kDataDirEnv = "HSLMU_DATA_DIR";
inline constexpr std::string_view kOutputDirEnv = "HSLMU_OUTPUT_DIR";

struct RunConfig {
  std::string run_id = "run";
  std::string data_dir = "data";
  std::string output_dir = "runs";
  std::string file_prefix;  // e.g. "desk-" for desk-train-images-idx3-ubyte.gz

  TaskSpec task;
  CellConfig network;  // theta_bar <= 0 means "sequence length"; classes follow the data
  TrainPlan training;  // training.seed is the run's root seed

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string render_config(const RunConfig& config);

// Replaces data_dir / output_dir from the environment when set.
void apply_env_overrides(RunConfig& config);

// Network configuration for a dataset with `steps` steps and `classes` classes.
CellConfig resolve_network(const RunConfig& config, int steps, int classes);

std::filesystem::path run_directory(const RunConfig& config);

// Standard archive names, optionally prefixed.
struct DatasetFiles {
  std::filesystem::path train_images, train_labels, test_images, test_labels;
};
DatasetFiles dataset_files(const std::filesystem::path& dir, std::string_view prefix = "");

SequenceDataset load_dataset(const RunConfig& config);

}  // namespace hslmu
