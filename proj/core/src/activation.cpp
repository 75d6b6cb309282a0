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

#include "hslmu/activation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hslmu/error.hpp"

namespace hslmu {

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kRelu: return "relu";
    case ActivationKind::kSigmoid: return "sigmoid";
    case ActivationKind::kTanh: return "tanh";
    case ActivationKind::kClip: return "clip";
    case ActivationKind::kLifRate: return "lif_rate";
  }
  return "?";
}

ActivationKind parse_activation_kind(std::string_view name) {
  for (auto kind : {ActivationKind::kRelu, ActivationKind::kSigmoid,
                    ActivationKind::kTanh, ActivationKind::kClip,
                    ActivationKind::kLifRate}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown activation function '" + std::string(name) + "'");
}

double lif_gain_for_rate(double rate, double t_ref, double tau_rc) {
  if (!(rate > 0.0 && rate * t_ref < 1.0) || !(tau_rc > 0.0)) {
    throw ConfigError("lif_rate: target rate must lie in (0, 1/t_ref)");
  }
  // 1/rate = t_ref + tau_rc * log1p(1/g)
  return 1.0 / std::expm1((1.0 / rate - t_ref) / tau_rc);
}

ActivationFn ActivationFn::lif_rate(double t_ref, double tau_rc) {
  constexpr double e = std::numbers::e;
  return {.kind = ActivationKind::kLifRate,
          .gain = lif_gain_for_rate(e / (1.0 + e), t_ref, tau_rc),
          .t_ref = t_ref,
          .tau_rc = tau_rc};
}

double eval_activation(const ActivationFn& f, double x) {
  switch (f.kind) {
    case ActivationKind::kRelu:
      return std::clamp(x, 0.0, 1.0);
    case ActivationKind::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case ActivationKind::kTanh:
      return std::tanh(x);
    case ActivationKind::kClip:
      return std::clamp(x, -1.0, 1.0);
    case ActivationKind::kLifRate: {
      const double j = f.gain * (x - f.offset);
      if (!(j > 0.0)) return 0.0;
      return 1.0 / (f.t_ref + f.tau_rc * std::log1p(1.0 / j));
    }
  }
  return 0.0;
}

double surrogate_gradient(const ActivationFn& f, double x) {
  switch (f.kind) {
    case ActivationKind::kRelu:
      return (x > 0.0 && x < 1.0) ? 1.0 : 0.0;
    case ActivationKind::kSigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case ActivationKind::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::kClip:
      return (x > -1.0 && x < 1.0) ? 1.0 : 0.0;
    case ActivationKind::kLifRate: {
      const double j = f.gain * (x - f.offset);
      if (!(j > 0.0)) return 0.0;
      const double rate = 1.0 / (f.t_ref + f.tau_rc * std::log1p(1.0 / j));
      // d/dx log1p(1/j) = -gain / (j (j + 1))
      const double slope = rate * rate * f.tau_rc * f.gain / (j * (j + 1.0));
      return std::min(slope, f.gradient_cap);
    }
  }
  return 0.0;
}

}  // namespace hslmu
