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

// The hybrid-spiking LMU cell and its output classifier.
//
// Per step, for a batch of sequences stored as matrix columns:
//
//   u   = e_x' x_t + e_h' h_{t-1} + e_m' m_{t-1}
//   m_t = Q_m(clip(lowpass_m(A_H m_{t-1} + B_H u)))
//   h_t = Q_h(lif(lowpass_h(W_x x_t + W_h h_{t-1} + W_m m_t + b_h)))
//   o_t = lowpass_o(W_out h_t)
//
// where Q is the temporally-diffused quantizer. Logits o_T + b_out are read
// at the last step only; by linearity this equals W_out lowpass_o(h) + b_out.
// (A_H, B_H) are the lowpass-compensated memory matrices and are never
// trained.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hslmu/activation.hpp"
#include "hslmu/lmu.hpp"
#include "hslmu/quantizer.hpp"

namespace hslmu {

struct CellConfig {
  int input_dim = 1;
  int hidden = 128;  // n
  int order = 128;   // d
  int classes = 10;
  double theta_bar = 784.0;  // memory window, steps
  double tau_memory = 200.0;
  double tau_hidden = 10.0;  // 0 disables the filter
  double tau_output = 10.0;  // 0 disables the filter
  ActivationFn hidden_fn = ActivationFn::lif_rate();
  ActivationFn memory_fn = ActivationFn::clip();

  // Throws ConfigError on non-positive sizes or time constants.
  void validate() const;
  bool operator==(const CellConfig&) const = default;
};

struct TensorRef {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

struct ConstTensorRef {
  std::string_view name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

// Trainable tensors. Also used as the gradient container.
struct Parameters {
  Eigen::MatrixXd input_weights;      // n x input_dim
  Eigen::MatrixXd recurrent_weights;  // n x n
  Eigen::MatrixXd memory_weights;     // n x d
  Eigen::VectorXd hidden_bias;        // n
  Eigen::VectorXd input_encoder;      // input_dim
  Eigen::VectorXd hidden_encoder;     // n
  Eigen::VectorXd memory_encoder;     // d
  Eigen::MatrixXd output_weights;     // classes x n
  Eigen::VectorXd output_bias;        // classes

  static Parameters zeros(const CellConfig& config);

  // Stable order; names are unique.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;

  void set_zero();
  Parameters& operator+=(const Parameters& other);
  Parameters& operator*=(double scale);
  double squared_norm() const;
  bool all_finite() const;
  bool operator==(const Parameters& other) const;
};

struct Resolutions {
  Resolution hidden{1.0};
  Resolution memory{1.0};
};

enum class QuantizeMode {
  kQuantized,  // temporally-diffused quantizer on both populations
  kIdeal,      // raw f_h / f_m, no quantizer
};

// Persistent per-sequence state, one column per sequence.
struct CellState {
  Eigen::MatrixXd hidden;           // h_{t-1}, n x B
  Eigen::MatrixXd memory;           // m_{t-1}, d x B
  Eigen::MatrixXd hidden_filter;    // n x B
  Eigen::MatrixXd memory_filter;    // d x B
  Eigen::MatrixXd output_filter;    // classes x B, filtered W_out h
  Eigen::MatrixXd hidden_residual;  // n x B
  Eigen::MatrixXd memory_residual;  // d x B

  Eigen::Index batch() const { return hidden.cols(); }
};

// Optional per-step outputs for training and metrics.
struct StepRecord {
  Eigen::MatrixXd hidden_slope;   // f_h'(filtered hidden input)
  Eigen::MatrixXd memory_slope;   // f_m'(filtered memory input)
  Eigen::MatrixXd hidden_counts;  // spike counts k
  Eigen::MatrixXd memory_counts;
};

struct StepOptions {
  Resolutions omegas;
  QuantizeMode mode = QuantizeMode::kQuantized;
  bool want_slopes = false;
  bool want_counts = false;
};

class Network {
 public:
  explicit Network(const CellConfig& config);

  const CellConfig& config() const noexcept { return config_; }
  const LmuSystem& memory_system() const noexcept { return system_; }
  Parameters& params() noexcept { return params_; }
  const Parameters& params() const noexcept { return params_; }

  // Fresh state for a batch; each sequence draws its hidden then memory
  // residuals from U[0, 1) seeded by its entry in `residual_seeds`.
  CellState initial_state(std::span<const std::uint64_t> residual_seeds) const;

  double hidden_decay() const noexcept { return hidden_decay_; }
  double memory_decay() const noexcept { return memory_decay_; }
  double output_decay() const noexcept { return output_decay_; }

 private:
  CellConfig config_;
  LmuSystem system_;
  Parameters params_;
  double hidden_decay_;
  double memory_decay_;
  double output_decay_;
};

// Advances every column of `state` by one step. `input` is input_dim x B.
void cell_step(const Network& net, CellState& state,
               const Eigen::Ref<const Eigen::MatrixXd>& input,
               const StepOptions& options, StepRecord* record = nullptr);

// Filtered W_out h plus b_out.
Eigen::MatrixXd output_logits(const Network& net, const CellState& state);

// Called after every step with the spike counts of both populations.
using ActivityObserver = std::function<void(
    int step, const Eigen::MatrixXd& hidden_counts, const Eigen::MatrixXd& memory_counts)>;

struct ForwardOptions {
  Resolutions omegas;
  QuantizeMode mode = QuantizeMode::kQuantized;
  ActivityObserver observer;  // optional
  bool record_trace = false;
};

struct ActivityTrace {
  std::vector<Eigen::MatrixXd> hidden;  // per step, quantized outputs n x B
  std::vector<Eigen::MatrixXd> memory;  // per step, d x B
};

struct ForwardResult {
  Eigen::MatrixXd logits;  // classes x B
  ActivityTrace trace;     // empty unless requested
};

// Runs T = inputs.rows() / input_dim steps over a batch of sequences. Column
// b of `inputs` holds sequence b, steps stacked (row t * input_dim + i).
ForwardResult forward_sequence(const Network& net, const Eigen::MatrixXd& inputs,
                               std::span<const std::uint64_t> residual_seeds,
                               const ForwardOptions& options);

// Index of the largest logit per column, ties to the lowest index.
std::vector<int> argmax_columns(const Eigen::MatrixXd& logits);

struct StateCensus {
  long long quantizer_residuals = 0;
  long long lowpass_channels = 0;
  long long output_filters = 0;
  long long total() const { return quantizer_residuals + lowpass_channels + output_filters; }
};

// Persistent scalars carried between steps by one sequence.
StateCensus count_states(const CellConfig& config);

}  // namespace hslmu
