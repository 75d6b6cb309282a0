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

#include "hslmu/lmu.hpp"

#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "hslmu/error.hpp"

namespace hslmu {

StateSpace make_legendre_matrices(int order) {
  if (order < 1) throw ConfigError("memory order d must be >= 1");
  StateSpace s{Eigen::MatrixXd(order, order), Eigen::VectorXd(order)};
  for (int i = 0; i < order; ++i) {
    const double scale = 2.0 * i + 1.0;
    s.B(i) = (i % 2 == 0) ? scale : -scale;
    for (int j = 0; j < order; ++j) {
      // (-1)^(i - j + 1) is +1 exactly when i - j is odd.
      const double sign = (i < j) ? -1.0 : (((i - j) % 2 == 1) ? 1.0 : -1.0);
      s.A(i, j) = scale * sign;
    }
  }
  return s;
}

StateSpace discretize_zoh(const StateSpace& continuous, double theta_bar) {
  if (!(theta_bar > 0.0) || !std::isfinite(theta_bar)) {
    throw ConfigError("window length theta must be finite and > 0");
  }
  const auto n = continuous.A.rows();
  // Eigen's matrix exponential: scaling and squaring with a degree-13 Pade
  // approximant.
  Eigen::MatrixXd a_bar = (continuous.A / theta_bar).exp();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(continuous.A);
  if (!lu.isInvertible()) {
    throw NumericalError("discretize_zoh: A is singular, B_bar is undefined");
  }
  Eigen::VectorXd rhs = (a_bar - Eigen::MatrixXd::Identity(n, n)) * continuous.B;
  Eigen::VectorXd b_bar = lu.solve(rhs);
  if (!a_bar.allFinite() || !b_bar.allFinite()) {
    throw NumericalError("discretize_zoh: non-finite discretized system");
  }
  return {std::move(a_bar), std::move(b_bar)};
}

double lowpass_decay(double tau_bar) {
  if (!(tau_bar > 0.0)) return 0.0;
  return std::exp(-1.0 / tau_bar);
}

StateSpace compensate_lowpass(const StateSpace& discrete, double tau_bar) {
  if (!(tau_bar > 0.0)) throw ConfigError("lowpass time constant tau must be > 0");
  const double a = lowpass_decay(tau_bar);
  const double scale = 1.0 / (1.0 - a);
  const auto n = discrete.A.rows();
  return {scale * (discrete.A - a * Eigen::MatrixXd::Identity(n, n)),
          scale * discrete.B};
}

LmuSystem LmuSystem::build(int order, double theta_bar, double tau_bar) {
  LmuSystem sys;
  sys.order = order;
  sys.theta_bar = theta_bar;
  sys.tau_bar = tau_bar;
  sys.continuous = make_legendre_matrices(order);
  sys.discrete = discretize_zoh(sys.continuous, theta_bar);
  sys.compensated = compensate_lowpass(sys.discrete, tau_bar);
  return sys;
}

double shifted_legendre(int i, double r) {
  const double x = 2.0 * r - 1.0;
  if (i == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < i; ++k) {
    const double next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

void shifted_legendre_basis(double r, std::span<double> out) {
  const double x = 2.0 * r - 1.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (k == 0) {
      out[k] = 1.0;
    } else if (k == 1) {
      out[k] = x;
    } else {
      const double n = static_cast<double>(k - 1);
      out[k] = ((2.0 * n + 1.0) * x * out[k - 1] - n * out[k - 2]) / (n + 1.0);
    }
  }
}

double legendre_reconstruct(const Eigen::VectorXd& memory, double r) {
  std::vector<double> basis(static_cast<std::size_t>(memory.size()));
  shifted_legendre_basis(r, basis);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < memory.size(); ++i) {
    sum += basis[static_cast<std::size_t>(i)] * memory(i);
  }
  return sum;
}

}  // namespace hslmu
