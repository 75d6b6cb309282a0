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

#include "hslmu/network.hpp"

#include <cmath>

#include "hslmu/error.hpp"
#include "hslmu/rng.hpp"

namespace hslmu {

void CellConfig::validate() const {
  if (input_dim < 1 || hidden < 1 || order < 1 || classes < 1) {
    throw ConfigError("network dimensions must all be >= 1");
  }
  if (!(theta_bar > 0.0)) throw ConfigError("network.theta must be > 0");
  if (!(tau_memory > 0.0)) throw ConfigError("network.tau_memory must be > 0");
  if (tau_hidden < 0.0 || tau_output < 0.0) {
    throw ConfigError("network.tau_hidden and network.tau_output must be >= 0");
  }
}

Parameters Parameters::zeros(const CellConfig& c) {
  Parameters p;
  p.input_weights = Eigen::MatrixXd::Zero(c.hidden, c.input_dim);
  p.recurrent_weights = Eigen::MatrixXd::Zero(c.hidden, c.hidden);
  p.memory_weights = Eigen::MatrixXd::Zero(c.hidden, c.order);
  p.hidden_bias = Eigen::VectorXd::Zero(c.hidden);
  p.input_encoder = Eigen::VectorXd::Zero(c.input_dim);
  p.hidden_encoder = Eigen::VectorXd::Zero(c.hidden);
  p.memory_encoder = Eigen::VectorXd::Zero(c.order);
  p.output_weights = Eigen::MatrixXd::Zero(c.classes, c.hidden);
  p.output_bias = Eigen::VectorXd::Zero(c.classes);
  return p;
}

namespace {

template <class Ref, class Self>
std::vector<Ref> collect(Self& p) {
  auto entry = [](std::string_view name, auto& m) {
    return Ref{name, m.data(), m.rows(), m.cols()};
  };
  return {
      entry("cell.input_weights", p.input_weights),
      entry("cell.recurrent_weights", p.recurrent_weights),
      entry("cell.memory_weights", p.memory_weights),
      entry("cell.hidden_bias", p.hidden_bias),
      entry("cell.input_encoder", p.input_encoder),
      entry("cell.hidden_encoder", p.hidden_encoder),
      entry("cell.memory_encoder", p.memory_encoder),
      entry("output.weights", p.output_weights),
      entry("output.bias", p.output_bias),
  };
}

}  // namespace

std::vector<TensorRef> Parameters::tensors() { return collect<TensorRef>(*this); }

std::vector<ConstTensorRef> Parameters::tensors() const {
  return collect<ConstTensorRef>(*this);
}

void Parameters::set_zero() {
  for (auto& t : tensors()) std::fill(t.data, t.data + t.size(), 0.0);
}

Parameters& Parameters::operator+=(const Parameters& other) {
  auto dst = tensors();
  auto src = other.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].size() != src[i].size()) throw ConfigError("parameter shape mismatch");
    for (Eigen::Index j = 0; j < dst[i].size(); ++j) dst[i].data[j] += src[i].data[j];
  }
  return *this;
}

Parameters& Parameters::operator*=(double scale) {
  for (auto& t : tensors()) {
    for (Eigen::Index j = 0; j < t.size(); ++j) t.data[j] *= scale;
  }
  return *this;
}

double Parameters::squared_norm() const {
  double sum = 0.0;
  for (const auto& t : tensors()) {
    for (Eigen::Index j = 0; j < t.size(); ++j) sum += t.data[j] * t.data[j];
  }
  return sum;
}

bool Parameters::all_finite() const {
  for (const auto& t : tensors()) {
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      if (!std::isfinite(t.data[j])) return false;
    }
  }
  return true;
}

bool Parameters::operator==(const Parameters& other) const {
  auto a = tensors();
  auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) return false;
    if (!std::equal(a[i].data, a[i].data + a[i].size(), b[i].data)) return false;
  }
  return true;
}

Network::Network(const CellConfig& config)
    : config_((config.validate(), config)),
      system_(LmuSystem::build(config.order, config.theta_bar, config.tau_memory)),
      params_(Parameters::zeros(config)),
      hidden_decay_(lowpass_decay(config.tau_hidden)),
      memory_decay_(lowpass_decay(config.tau_memory)),
      output_decay_(lowpass_decay(config.tau_output)) {}

CellState Network::initial_state(std::span<const std::uint64_t> residual_seeds) const {
  const auto batch = static_cast<Eigen::Index>(residual_seeds.size());
  const int n = config_.hidden;
  const int d = config_.order;
  CellState s;
  s.hidden = Eigen::MatrixXd::Zero(n, batch);
  s.memory = Eigen::MatrixXd::Zero(d, batch);
  s.hidden_filter = Eigen::MatrixXd::Zero(n, batch);
  s.memory_filter = Eigen::MatrixXd::Zero(d, batch);
  s.output_filter = Eigen::MatrixXd::Zero(config_.classes, batch);
  s.hidden_residual.resize(n, batch);
  s.memory_residual.resize(d, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Rng rng(residual_seeds[static_cast<std::size_t>(b)]);
    for (int i = 0; i < n; ++i) s.hidden_residual(i, b) = uniform01(rng);
    for (int i = 0; i < d; ++i) s.memory_residual(i, b) = uniform01(rng);
  }
  return s;
}

namespace {

// Applies f (and the quantizer) to the filtered inputs of one population.
void activate(const ActivationFn& f, Resolution omega, QuantizeMode mode,
              const Eigen::MatrixXd& filtered, Eigen::MatrixXd& residual,
              Eigen::MatrixXd& out, Eigen::MatrixXd* slope, Eigen::MatrixXd* counts) {
  const Eigen::Index size = filtered.size();
  out.resize(filtered.rows(), filtered.cols());
  if (slope) slope->resize(filtered.rows(), filtered.cols());
  if (counts) counts->resize(filtered.rows(), filtered.cols());
  const double w = omega.value();
  for (Eigen::Index i = 0; i < size; ++i) {
    const double x = filtered.data()[i];
    const double a = eval_activation(f, x);
    if (mode == QuantizeMode::kIdeal) {
      out.data()[i] = a;
      if (counts) counts->data()[i] = a * w;
    } else {
      const auto r = quantize_step(residual.data()[i], a, omega);
      residual.data()[i] = r.residual;
      out.data()[i] = r.output;
      if (counts) counts->data()[i] = r.count;
    }
    if (slope) slope->data()[i] = surrogate_gradient(f, x);
  }
}

}  // namespace

void cell_step(const Network& net, CellState& state,
               const Eigen::Ref<const Eigen::MatrixXd>& input,
               const StepOptions& options, StepRecord* record) {
  const auto& cfg = net.config();
  const auto& p = net.params();
  const auto& sys = net.memory_system().compensated;
  if (input.rows() != cfg.input_dim || input.cols() != state.batch()) {
    throw ConfigError("cell_step: input has the wrong shape");
  }

  // Memory input reads the previous step's activities.
  const Eigen::RowVectorXd u = p.input_encoder.transpose() * input +
                               p.hidden_encoder.transpose() * state.hidden +
                               p.memory_encoder.transpose() * state.memory;

  const double am = net.memory_decay();
  state.memory_filter = am * state.memory_filter +
                        (1.0 - am) * (sys.A * state.memory + sys.B * u);
  activate(cfg.memory_fn, options.omegas.memory, options.mode, state.memory_filter,
           state.memory_residual, state.memory,
           (record && options.want_slopes) ? &record->memory_slope : nullptr,
           (record && options.want_counts) ? &record->memory_counts : nullptr);

  // Hidden input reads the current memory and the previous hidden state.
  Eigen::MatrixXd drive = p.input_weights * input + p.recurrent_weights * state.hidden +
                          p.memory_weights * state.memory;
  drive.colwise() += p.hidden_bias;
  const double ah = net.hidden_decay();
  state.hidden_filter = ah * state.hidden_filter + (1.0 - ah) * drive;
  activate(cfg.hidden_fn, options.omegas.hidden, options.mode, state.hidden_filter,
           state.hidden_residual, state.hidden,
           (record && options.want_slopes) ? &record->hidden_slope : nullptr,
           (record && options.want_counts) ? &record->hidden_counts : nullptr);

  const double ao = net.output_decay();
  state.output_filter =
      ao * state.output_filter + (1.0 - ao) * (p.output_weights * state.hidden);
}

Eigen::MatrixXd output_logits(const Network& net, const CellState& state) {
  Eigen::MatrixXd logits = state.output_filter;
  logits.colwise() += net.params().output_bias;
  return logits;
}

ForwardResult forward_sequence(const Network& net, const Eigen::MatrixXd& inputs,
                               std::span<const std::uint64_t> residual_seeds,
                               const ForwardOptions& options) {
  const int in = net.config().input_dim;
  if (inputs.rows() < in || inputs.rows() % in != 0) {
    throw ConfigError("forward_sequence: input rows must be a positive multiple of input_dim");
  }
  if (static_cast<std::size_t>(inputs.cols()) != residual_seeds.size()) {
    throw ConfigError("forward_sequence: one residual seed per sequence required");
  }
  const int steps = static_cast<int>(inputs.rows() / in);
  CellState state = net.initial_state(residual_seeds);
  StepOptions step_opts{options.omegas, options.mode, false,
                        static_cast<bool>(options.observer)};
  StepRecord record;
  ForwardResult result;
  for (int t = 0; t < steps; ++t) {
    cell_step(net, state, inputs.middleRows(t * in, in), step_opts, &record);
    if (options.observer) options.observer(t, record.hidden_counts, record.memory_counts);
    if (options.record_trace) {
      result.trace.hidden.push_back(state.hidden);
      result.trace.memory.push_back(state.memory);
    }
  }
  result.logits = output_logits(net, state);
  return result;
}

std::vector<int> argmax_columns(const Eigen::MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.rows(); ++k) {
      if (logits(k, b) > logits(best, b)) best = k;
    }
    out[static_cast<std::size_t>(b)] = static_cast<int>(best);
  }
  return out;
}

StateCensus count_states(const CellConfig& config) {
  StateCensus c;
  c.quantizer_residuals = config.hidden + config.order;
  c.lowpass_channels = config.hidden + config.order;
  c.output_filters = config.classes;
  return c;
}

}  // namespace hslmu
