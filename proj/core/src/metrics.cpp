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

#include "hslmu/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "hslmu/error.hpp"

namespace hslmu {

void PopulationStats::add(std::int64_t k) {
  ++samples;
  const std::uint64_t mag = k < 0 ? static_cast<std::uint64_t>(-(k + 1)) + 1 : static_cast<std::uint64_t>(k);
  if (mag == 0) {
    ++zeros;
  } else if (mag == 1) {
    ++unit;
  } else {
    ++multi;
  }
  significant_bits += static_cast<std::uint64_t>(hslmu::significant_bits(k));
  min_count = std::min(min_count, k);
  max_count = std::max(max_count, k);
  if (mag <= static_cast<std::uint64_t>(kHistogramLimit)) ++histogram[k];
}

void PopulationStats::merge(const PopulationStats& other) {
  samples += other.samples;
  zeros += other.zeros;
  unit += other.unit;
  multi += other.multi;
  significant_bits += other.significant_bits;
  min_count = std::min(min_count, other.min_count);
  max_count = std::max(max_count, other.max_count);
  for (const auto& [k, n] : other.histogram) histogram[k] += n;
}

PopulationStats summarize(const PopulationRecord& record) {
  PopulationStats s;
  s.name = record.name;
  s.neurons = record.neurons;
  s.omega = record.omega;
  s.signed_counts = record.signed_counts;
  for (auto k : record.counts) s.add(k);
  return s;
}

std::vector<PopulationStats> summarize(const ActivityRecord& record) {
  std::vector<PopulationStats> out;
  for (const auto& p : record.populations) out.push_back(summarize(p));
  return out;
}

int significant_bits(std::int64_t k) {
  if (k == 0) return 0;
  std::uint64_t mag = k < 0 ? static_cast<std::uint64_t>(-(k + 1)) + 1 : static_cast<std::uint64_t>(k);
  mag >>= std::countr_zero(mag);
  return std::bit_width(mag) + (k < 0 ? 1 : 0);
}

int bits_for_levels(std::int64_t levels) {
  if (levels <= 1) return 0;
  return std::bit_width(static_cast<std::uint64_t>(levels - 1));
}

namespace {

void require_nonempty(std::span<const PopulationStats> stats, const char* metric) {
  if (stats.empty()) throw ConfigError(std::string(metric) + ": empty activity record");
  for (const auto& s : stats) {
    if (s.samples == 0) {
      throw ConfigError(std::string(metric) + ": population '" + s.name + "' has no samples");
    }
  }
}

}  // namespace

double weighted_average_bits(std::span<const PopulationBits> populations) {
  double weighted = 0.0;
  double neurons = 0.0;
  for (const auto& p : populations) {
    weighted += static_cast<double>(p.neurons) * p.bits;
    neurons += p.neurons;
  }
  return neurons > 0.0 ? weighted / neurons : 0.0;
}

BitWidthReport bitwidth_metric(std::span<const PopulationStats> stats) {
  require_nonempty(stats, "bitwidth_metric");
  BitWidthReport report;
  double bound_weighted = 0.0;
  double neurons = 0.0;
  for (const auto& s : stats) {
    PopulationBits p;
    p.name = s.name;
    p.neurons = s.neurons;
    p.min_count = s.min_count;
    p.max_count = s.max_count;
    p.levels = s.max_count - s.min_count + 1;
    p.bits = bits_for_levels(p.levels);
    p.bound_bits = static_cast<int>(std::ceil(std::log2(s.omega + 1.0))) + (s.signed_counts ? 1 : 0);
    bound_weighted += static_cast<double>(s.neurons) * p.bound_bits;
    neurons += s.neurons;
    report.populations.push_back(p);
  }
  report.average = weighted_average_bits(report.populations);
  report.bound_average = neurons > 0.0 ? bound_weighted / neurons : 0.0;
  return report;
}

BitWidthReport bitwidth_metric(const ActivityRecord& record) {
  return bitwidth_metric(summarize(record));
}

double significant_bits_metric(std::span<const PopulationStats> stats) {
  require_nonempty(stats, "significant_bits_metric");
  // Every population spans the same steps, so pooling the (neuron, step)
  // pairs weights each population by its size.
  double bits = 0.0;
  double samples = 0.0;
  for (const auto& s : stats) {
    bits += static_cast<double>(s.significant_bits);
    samples += static_cast<double>(s.samples);
  }
  return bits / samples;
}

double significant_bits_metric(const ActivityRecord& record) {
  return significant_bits_metric(summarize(record));
}

std::vector<PopulationSparsity> sparsity_metric(std::span<const PopulationStats> stats) {
  require_nonempty(stats, "sparsity_metric");
  std::vector<PopulationSparsity> out;
  for (const auto& s : stats) {
    const double zero = static_cast<double>(s.zeros) / static_cast<double>(s.samples);
    out.push_back({s.name, zero, 1.0 - zero});
  }
  return out;
}

std::vector<PopulationSparsity> sparsity_metric(const ActivityRecord& record) {
  return sparsity_metric(summarize(record));
}

double measured_snr(std::span<const double> ideal, std::span<const double> quantized,
                    double tau_bar) {
  if (ideal.size() != quantized.size()) {
    throw ConfigError("measured_snr: streams differ in length");
  }
  const double a = lowpass_decay(tau_bar);
  const auto warmup = static_cast<std::size_t>(std::ceil(5.0 * std::max(tau_bar, 0.0)));
  double ys = 0.0;
  double ye = 0.0;
  double signal = 0.0;
  double noise = 0.0;
  std::size_t kept = 0;
  for (std::size_t t = 0; t < ideal.size(); ++t) {
    ys = a * ys + (1.0 - a) * ideal[t];
    ye = a * ye + (1.0 - a) * (quantized[t] - ideal[t]);
    if (t < warmup) continue;
    signal += ys * ys;
    noise += ye * ye;
    ++kept;
  }
  if (kept == 0 || !(signal > 0.0)) {
    throw NumericalError("measured_snr: filtered signal has zero power");
  }
  if (noise == 0.0) return kSnrSentinel;
  return signal / noise;
}

OpCensus op_census(std::span<const PopulationStats> stats, std::span<const long long> fan_out) {
  if (fan_out.size() != stats.size()) {
    throw ConfigError("op_census: one fan-out per population required");
  }
  OpCensus census;
  for (std::size_t p = 0; p < stats.size(); ++p) {
    const auto w = static_cast<std::uint64_t>(fan_out[p]);
    OpCounts c{stats[p].zeros * w, stats[p].unit * w, stats[p].multi * w};
    census.total.skipped += c.skipped;
    census.total.adds += c.adds;
    census.total.multiplies += c.multiplies;
    census.populations.emplace_back(stats[p].name, c);
  }
  return census;
}

OpCensus op_census(const ActivityRecord& record, std::span<const long long> fan_out) {
  return op_census(summarize(record), fan_out);
}

std::vector<long long> activity_fan_out(const CellConfig& c) {
  return {static_cast<long long>(c.hidden) + c.classes + 1,
          static_cast<long long>(c.order) + c.hidden + 1};
}

ActivityStats ActivityStats::for_network(const CellConfig& config, const Resolutions& omegas) {
  ActivityStats s;
  s.hidden.name = "hidden";
  s.hidden.neurons = config.hidden;
  s.hidden.omega = omegas.hidden.value();
  s.hidden.signed_counts = false;
  s.memory.name = "memory";
  s.memory.neurons = config.order;
  s.memory.omega = omegas.memory.value();
  s.memory.signed_counts = true;
  return s;
}

void ActivityStats::add(const Eigen::MatrixXd& hidden_counts,
                        const Eigen::MatrixXd& memory_counts) {
  for (Eigen::Index i = 0; i < hidden_counts.size(); ++i) {
    hidden.add(std::llround(hidden_counts.data()[i]));
  }
  for (Eigen::Index i = 0; i < memory_counts.size(); ++i) {
    memory.add(std::llround(memory_counts.data()[i]));
  }
}

void ActivityStats::merge(const ActivityStats& other) {
  hidden.merge(other.hidden);
  memory.merge(other.memory);
}

}  // namespace hslmu
