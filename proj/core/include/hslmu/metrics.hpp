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

// Activity metrics over integer spike counts k = output * omega.
//
// Metrics are computed from PopulationStats, a streaming summary, so long
// evaluations never hold the full activity streams. ActivityRecord keeps the
// streams explicitly for small runs and tests; both paths share the same
// arithmetic.

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hslmu/network.hpp"

namespace hslmu {

struct PopulationRecord {
  std::string name;
  int neurons = 0;
  double omega = 1.0;
  bool signed_counts = false;
  std::vector<std::int64_t> counts;  // step-major: counts[t * neurons + i]

  std::size_t steps() const { return neurons == 0 ? 0 : counts.size() / neurons; }
};

struct ActivityRecord {
  std::vector<PopulationRecord> populations;
};

struct PopulationStats {
  std::string name;
  int neurons = 0;
  double omega = 1.0;
  bool signed_counts = false;
  std::uint64_t samples = 0;  // (neuron, step) pairs
  std::uint64_t zeros = 0;
  std::uint64_t unit = 0;   // |k| == 1
  std::uint64_t multi = 0;  // |k| > 1
  std::uint64_t significant_bits = 0;
  std::int64_t min_count = std::numeric_limits<std::int64_t>::max();
  std::int64_t max_count = std::numeric_limits<std::int64_t>::min();
  std::map<std::int64_t, std::uint64_t> histogram;  // |k| <= kHistogramLimit only

  static constexpr std::int64_t kHistogramLimit = 4096;

  void add(std::int64_t k);
  void merge(const PopulationStats& other);
};

PopulationStats summarize(const PopulationRecord& record);
std::vector<PopulationStats> summarize(const ActivityRecord& record);

// Significant bits of one count: bit length of |k| after stripping trailing
// zeros, plus a sign bit when k < 0. Zero has none.
int significant_bits(std::int64_t k);

// Bits needed to index `levels` distinct values, ceil(log2(levels)).
int bits_for_levels(std::int64_t levels);

struct PopulationBits {
  std::string name;
  int neurons = 0;
  std::int64_t min_count = 0;
  std::int64_t max_count = 0;
  std::int64_t levels = 0;  // max - min + 1 over the observed counts
  int bits = 0;             // bits_for_levels(levels)
  int bound_bits = 0;       // ceil(log2(omega + 1)), plus one if signed
};

struct BitWidthReport {
  std::vector<PopulationBits> populations;
  double average = 0.0;        // weighted by neuron count
  double bound_average = 0.0;  // same, using the a-priori bound
};

// Neuron-weighted mean of per-population bit counts.
double weighted_average_bits(std::span<const PopulationBits> populations);

// Throws ConfigError for an empty record.
BitWidthReport bitwidth_metric(std::span<const PopulationStats> stats);
BitWidthReport bitwidth_metric(const ActivityRecord& record);

// Mean significant bits per (neuron, step) over all populations.
double significant_bits_metric(std::span<const PopulationStats> stats);
double significant_bits_metric(const ActivityRecord& record);

struct PopulationSparsity {
  std::string name;
  double zero_fraction = 0.0;
  double nonzero_fraction = 0.0;
};

std::vector<PopulationSparsity> sparsity_metric(std::span<const PopulationStats> stats);
std::vector<PopulationSparsity> sparsity_metric(const ActivityRecord& record);

// Reported when the filtered error has zero power.
inline constexpr double kSnrSentinel = std::numeric_limits<double>::max();

// power(lowpass(ideal)) / power(lowpass(quantized - ideal)), both filtered
// with time constant tau_bar from rest, discarding the first ceil(5 tau_bar)
// samples. Throws ConfigError on length mismatch and NumericalError when the
// filtered signal has no power.
double measured_snr(std::span<const double> ideal, std::span<const double> quantized,
                    double tau_bar);

struct OpCounts {
  std::uint64_t skipped = 0;     // weights untouched (k = 0)
  std::uint64_t adds = 0;        // weight added or subtracted (|k| = 1)
  std::uint64_t multiplies = 0;  // weight times a small integer (|k| > 1)

  bool operator==(const OpCounts&) const = default;
};

struct OpCensus {
  std::vector<std::pair<std::string, OpCounts>> populations;
  OpCounts total;
};

// fan_out[p] is the number of outgoing weights of each neuron of population p.
OpCensus op_census(std::span<const PopulationStats> stats, std::span<const long long> fan_out);
OpCensus op_census(const ActivityRecord& record, std::span<const long long> fan_out);

// Outgoing weights per hidden neuron (W_h column, e_h entry, W_out column)
// and per memory neuron (A_H column, W_m column, e_m entry).
std::vector<long long> activity_fan_out(const CellConfig& config);

// Accumulates hidden/memory counts emitted by forward passes.
struct ActivityStats {
  PopulationStats hidden;
  PopulationStats memory;

  static ActivityStats for_network(const CellConfig& config, const Resolutions& omegas);
  void add(const Eigen::MatrixXd& hidden_counts, const Eigen::MatrixXd& memory_counts);
  void merge(const ActivityStats& other);
  std::vector<PopulationStats> populations() const { return {hidden, memory}; }
};

}  // namespace hslmu
