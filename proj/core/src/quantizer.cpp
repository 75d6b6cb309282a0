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

#include "hslmu/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hslmu/error.hpp"
#include "hslmu/rng.hpp"

namespace hslmu {

Resolution::Resolution(double omega) : omega_(omega) {
  if (!(std::isfinite(omega) && omega > 0.0)) {
    throw ConfigError("quantizer resolution omega must be finite and > 0, got " +
                      std::to_string(omega));
  }
}

QuantizeResult quantize_step(double residual, double activation, Resolution omega) {
  if (!std::isfinite(activation)) {
    throw NumericalError("quantizer received a non-finite activation");
  }
  const double w = omega.value();
  const double s = residual + activation * w;
  double k = std::floor(s);
  double v = s - k;
  // s slightly below an integer can round v up to exactly 1.
  if (v >= 1.0) {
    k += 1.0;
    v = 0.0;
  }
  return {v, k, k / w};
}

std::vector<double> init_residuals(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(count);
  for (auto& x : v) x = uniform01(rng);
  return v;
}

QuantizedActivation::QuantizedActivation(ActivationFn f, Resolution omega,
                                         std::size_t neurons)
    : f_(f), omega_(omega), residuals_(neurons, 0.0) {}

void QuantizedActivation::reset(std::span<const double> residuals) {
  if (residuals.size() != residuals_.size()) {
    throw ConfigError("residual count does not match the population size");
  }
  std::copy(residuals.begin(), residuals.end(), residuals_.begin());
}

void QuantizedActivation::step(std::span<const double> inputs,
                               std::span<double> outputs,
                               std::span<double> counts) {
  if (inputs.size() != size() || outputs.size() != size() ||
      (!counts.empty() && counts.size() != size())) {
    throw ConfigError("quantized activation: dimension mismatch");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = quantize_step(residuals_[i], eval_activation(f_, inputs[i]), omega_);
    residuals_[i] = r.residual;
    outputs[i] = r.output;
    if (!counts.empty()) counts[i] = r.count;
  }
}

}  // namespace hslmu
