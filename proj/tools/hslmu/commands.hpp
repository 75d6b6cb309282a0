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

// Subcommands of the hslmu tool. Each returns a process exit code and throws
// hslmu::Error subclasses for failures; run() maps those onto exit codes.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hslmu::cli {

// Mirror base URLs for fetch-data, overridable (comma separated) for tests.
inline constexpr std::string_view kMirrorEnv = "HSLMU_MNIST_MIRROR";

struct TrainArgs {
  std::filesystem::path config;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::string split = "test";
  std::optional<std::filesystem::path> config;  // default: config.ini beside the checkpoint
  bool ideal = false;                          // bypass the quantizers
};

struct SweepArgs {
  std::filesystem::path config;
  std::string omegas = "default";
  std::string population = "hidden";  // whose activation shapes the trace
  std::size_t sample = 0;             // training-split sequence index
};

struct ReportArgs {
  std::filesystem::path run_dir;
};

struct FetchArgs {
  std::filesystem::path out;
};

int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_sweep(const SweepArgs& args, std::ostream& out);
int cmd_report(const ReportArgs& args, std::ostream& out);
int cmd_fetch_data(const FetchArgs& args, std::ostream& out);

// "default" = {2^m - 1 : m = 1..8} plus 2^32. Otherwise comma separated
// numbers, "2^k" or "2^k-1". Throws ConfigError.
std::vector<double> parse_omega_list(std::string_view text);

// Parses argv, dispatches, and maps errors onto exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hslmu::cli
