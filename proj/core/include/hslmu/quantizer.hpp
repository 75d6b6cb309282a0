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

// Temporally-diffused quantization of activation functions.
//
// Each neuron keeps a residual v in [0, 1). Per step, with ideal activation a
// and resolution omega:
//
//   s = v + a * omega;  k = floor(s);  v' = s - k;  output = k / omega
//
// k is the (signed) number of spikes emitted in the step. The rounding error
// is pushed into v', so over any window of consecutive steps the summed
// output error equals (v_first - v_last) / omega and stays below 1 / omega.
// omega = 1 gives one-bit spiking for non-negative activations; large omega
// recovers the ideal activation.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hslmu/activation.hpp"

namespace hslmu {

// The quantizer resolution omega. Always finite and strictly positive; may be
// fractional.
class Resolution {
 public:
  // Throws ConfigError when omega is not a finite positive number.
  explicit Resolution(double omega);

  double value() const noexcept { return omega_; }
  // 2^32, where outputs are within 2^-32 of the ideal activation.
  static Resolution ann() { return Resolution(4294967296.0); }

  bool operator==(const Resolution&) const = default;

 private:
  double omega_;
};

struct QuantizeResult {
  double residual;  // v', in [0, 1)
  double count;     // k, integer valued
  double output;    // k / omega
};

// One step of the quantizer. `activation` is the ideal value a = f(x); it is
// expected to satisfy |a| <= 1. Throws NumericalError for non-finite input.
QuantizeResult quantize_step(double residual, double activation, Resolution omega);

// Per-neuron quantizer state: residual plus resolution.
struct QuantizerState {
  double residual = 0.0;
  Resolution omega{1.0};

  // Advances the state and returns the quantized output.
  double step(double activation) {
    const auto r = quantize_step(residual, activation, omega);
    residual = r.residual;
    return r.output;
  }
};

// i.i.d. U[0, 1) initial residuals, reproducible from `seed`.
std::vector<double> init_residuals(std::size_t count, std::uint64_t seed);

// An ideal activation function wrapped by one quantizer per neuron.
class QuantizedActivation {
 public:
  QuantizedActivation(ActivationFn f, Resolution omega, std::size_t neurons);

  const ActivationFn& function() const noexcept { return f_; }
  Resolution omega() const noexcept { return omega_; }
  std::size_t size() const noexcept { return residuals_.size(); }
  std::span<const double> residuals() const noexcept { return residuals_; }

  void reset(std::span<const double> residuals);
  void reset(std::uint64_t seed) { reset(init_residuals(size(), seed)); }

  // outputs[i] = quantized f(inputs[i]); counts (optional) receives k.
  void step(std::span<const double> inputs, std::span<double> outputs,
            std::span<double> counts = {});

 private:
  ActivationFn f_;
  Resolution omega_;
  std::vector<double> residuals_;
};

}  // namespace hslmu
