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

#include <string>
#include <string_view>

namespace hslmu {

enum class ActivationKind { kRelu, kSigmoid, kTanh, kClip, kLifRate };

std::string_view to_string(ActivationKind kind);
// Throws ConfigError for unknown names.
ActivationKind parse_activation_kind(std::string_view name);

// Ideal (unquantized) activation function with range in [-1, 1].
//
// relu and clip saturate at 1 so every kind stays inside the quantizer's
// input range. lif_rate is the steady-state firing rate of a leaky
// integrate-and-fire neuron, in spikes per step, driven by J = gain * (x -
// offset) + 1 against a unit threshold:
//
//   f(x) = 1 / (t_ref + tau_rc * log(1 + 1 / (gain * (x - offset))))
//
// for x > offset and 0 otherwise, so 0 <= f < 1 / t_ref.
struct ActivationFn {
  ActivationKind kind = ActivationKind::kClip;
  double gain = 1.0;
  double offset = 0.0;
  double t_ref = 1.0;    // refractory period, steps
  double tau_rc = 10.0;  // membrane leak, steps
  // Upper bound on the lif_rate surrogate gradient (infinite slope at x -> 0+).
  double gradient_cap = 100.0;

  static ActivationFn relu() { return {.kind = ActivationKind::kRelu}; }
  static ActivationFn sigmoid() { return {.kind = ActivationKind::kSigmoid}; }
  static ActivationFn tanh() { return {.kind = ActivationKind::kTanh}; }
  static ActivationFn clip() { return {.kind = ActivationKind::kClip}; }
  // LIF rate curve with gain chosen so that f(1) = e / (1 + e).
  static ActivationFn lif_rate(double t_ref = 1.0, double tau_rc = 10.0);

  bool operator==(const ActivationFn&) const = default;
};

// Gain placing the LIF rate at `rate` for x = 1 (zero offset). Requires
// 0 < rate < 1 / t_ref.
double lif_gain_for_rate(double rate, double t_ref, double tau_rc);

double eval_activation(const ActivationFn& f, double x);

// Derivative of the ideal activation; used on the backward pass in place of
// the quantizer. Zero below the lif_rate threshold, capped above it.
double surrogate_gradient(const ActivationFn& f, double x);

}  // namespace hslmu
