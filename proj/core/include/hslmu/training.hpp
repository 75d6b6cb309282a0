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

// Full-sequence BPTT with straight-through quantizer gradients, Adam, the
// resolution schedule and the early-stopping training loop.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hslmu/data.hpp"
#include "hslmu/metrics.hpp"
#include "hslmu/network.hpp"

namespace hslmu {

struct OmegaRange {
  double high = 16.0;
  double low = 1.0;
  bool operator==(const OmegaRange&) const = default;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  bool operator==(const AdamConfig&) const = default;
};

struct TrainPlan {
  OmegaRange hidden_omega{16.0, 1.0};
  OmegaRange memory_omega{32.0, 2.0};
  int interp_epochs = 10;
  int fine_tune_patience = 3;
  int max_epochs = 50;  // total, sweep included
  std::size_t batch_size = 500;
  AdamConfig adam;
  double l2 = 0.01;
  double clip_norm = 10.0;  // global gradient norm cap; <= 0 disables
  std::uint64_t seed = 0;
  std::size_t chunk_size = 25;  // sequences per gradient work item
  int threads = 1;

  // Throws ConfigError on a degenerate schedule or invalid sizes.
  void validate() const;
  bool operator==(const TrainPlan&) const = default;
};

enum class Population { kHidden, kMemory };

// Geometric sweep from high to low over interp_epochs, then low.
double schedule_omega(const TrainPlan& plan, int epoch, Population which);
Resolutions scheduled_resolutions(const TrainPlan& plan, int epoch);

// Seed of the quantizer residuals of one sequence. `purpose` separates
// training passes ("train", keyed by epoch) from evaluations ("eval").
std::uint64_t residual_seed(std::uint64_t root, std::string_view purpose,
                            std::uint64_t epoch, std::uint64_t index);

struct Batch {
  Eigen::MatrixXd inputs;  // (T * input_dim) x B, one sequence per column
  std::vector<int> labels;
  std::vector<std::uint64_t> residual_seeds;

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const SequenceSplit& split, std::span<const std::size_t> rows,
                 std::uint64_t root_seed, std::string_view purpose, std::uint64_t epoch);

struct GradientOptions {
  Resolutions omegas;
  QuantizeMode mode = QuantizeMode::kQuantized;
  double l2 = 0.0;
  std::size_t chunk_size = 25;
  int threads = 1;
};

struct GradientResult {
  Parameters gradients;
  double loss = 0.0;            // cross_entropy + regularization
  double cross_entropy = 0.0;   // batch mean
  double regularization = 0.0;  // l2 * ||W_out||^2
  std::size_t correct = 0;
};

// Softmax cross-entropy of one logit column against `label`.
double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int label);

// Mean loss over the batch and its exact gradient under the straight-through
// rule: the forward pass runs the quantized dynamics, the backward pass uses
// the surrogate slope of the ideal activation and treats residuals as
// constants. The frozen memory matrices receive no gradient. Throws
// NumericalError on a non-finite loss.
GradientResult bptt_gradients(const Network& net, const Batch& batch,
                              const GradientOptions& options);

// Scales `grads` in place so its global norm is at most max_norm; returns the
// norm before scaling.
double clip_global_norm(Parameters& grads, double max_norm);

struct AdamState {
  Parameters first;
  Parameters second;
  std::int64_t step = 0;

  static AdamState zeros(const CellConfig& config);
  bool operator==(const AdamState&) const = default;
};

void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
               const AdamConfig& config);

// Zero weights except e_x = 1, W_m ~ Xavier normal, W_out ~ Xavier uniform.
void initialize(Network& net, std::uint64_t seed);

struct EvalOptions {
  Resolutions omegas;
  QuantizeMode mode = QuantizeMode::kQuantized;
  std::size_t chunk_size = 25;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct EvalResult {
  std::size_t count = 0;
  std::size_t correct = 0;
  double loss = 0.0;  // mean cross-entropy
  ActivityStats activity;
  std::vector<int> predictions;

  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

EvalResult evaluate(const Network& net, const SequenceSplit& split, const EvalOptions& options);

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // "sweep" or "fine-tune"
  double omega_hidden = 0.0;
  double omega_memory = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double hidden_spike_fraction = 0.0;  // nonzero hidden counts on validation
  double memory_zero_fraction = 0.0;
  std::int64_t memory_levels = 0;  // observed count range on validation
  std::int64_t steps = 0;          // optimizer steps so far
  bool improved = false;
};

// One JSON object, no trailing newline. Deterministic formatting.
std::string to_json_line(const EpochRecord& record);

struct TrainHooks {
  std::function<void(const EpochRecord&, double wall_seconds)> on_epoch;
  // Called whenever an eligible epoch improves the validation loss.
  std::function<void(const Network&, const AdamState&, const EpochRecord&)> on_best;
};

struct TrainResult {
  Network best;
  Network last;
  AdamState optimizer;
  std::optional<EpochRecord> best_record;
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string failure;
};

// Sweeps the resolutions over interp_epochs, then fine-tunes at the low end
// until validation loss stops improving for fine_tune_patience epochs or
// max_epochs is reached. Only epochs at the low resolution (the last sweep
// epoch onward) are eligible as "best". On a non-finite loss the
// run stops with diverged = true and `best` holds the last good model.
TrainResult train(Network net, const TrainPlan& plan, const SequenceDataset& data,
                  const TrainHooks& hooks = {});

}  // namespace hslmu
