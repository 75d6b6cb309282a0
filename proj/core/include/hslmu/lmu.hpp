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

// Legendre memory: the linear system theta * dm/dt = A m + B u whose state
// holds a sliding window of u projected onto shifted Legendre polynomials,
// its zero-order-hold discretization, the lowpass-compensated variant used
// when the memory input is synaptically filtered, and the filter itself.

#pragma once

#include <span>

#include <Eigen/Dense>

namespace hslmu {

struct StateSpace {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
};

// Continuous (A, B) of order d:
//   a_ij = (2i + 1) * (i < j ? -1 : (-1)^(i - j + 1)),  b_i = (2i + 1) (-1)^i.
// Throws ConfigError for order < 1.
StateSpace make_legendre_matrices(int order);

// Zero-order hold with a step of 1/theta_bar:
//   A_bar = exp(A / theta_bar),  B_bar = A^-1 (A_bar - I) B.
// B_bar comes from a pivoted LU solve; a singular A raises NumericalError.
StateSpace discretize_zoh(const StateSpace& continuous, double theta_bar);

// Decay e^(-1/tau_bar) of a ZOH-discretized first-order lowpass; 0 for
// tau_bar <= 0 (no filtering).
double lowpass_decay(double tau_bar);

// Exchanges (A_bar, B_bar) for the matrices that reproduce the same memory
// trajectory when their output passes through a lowpass with time constant
// tau_bar:
//   A_H = (A_bar - a I) / (1 - a),  B_H = B_bar / (1 - a),  a = e^(-1/tau_bar).
// Throws ConfigError for tau_bar <= 0.
StateSpace compensate_lowpass(const StateSpace& discrete, double tau_bar);

// Frozen memory system for one network.
struct LmuSystem {
  int order = 0;
  double theta_bar = 0.0;
  double tau_bar = 0.0;
  StateSpace continuous;
  StateSpace discrete;
  StateSpace compensated;

  static LmuSystem build(int order, double theta_bar, double tau_bar);
};

// y_t = a y_{t-1} + (1 - a) x_t per channel, y_0 = 0.
class Lowpass {
 public:
  Lowpass(Eigen::Index channels, double tau_bar)
      : decay_(lowpass_decay(tau_bar)), y_(Eigen::VectorXd::Zero(channels)) {}

  double decay() const noexcept { return decay_; }
  const Eigen::VectorXd& value() const noexcept { return y_; }

  void reset() { y_.setZero(); }
  const Eigen::VectorXd& step(const Eigen::VectorXd& x) {
    y_ = decay_ * y_ + (1.0 - decay_) * x;
    return y_;
  }

 private:
  double decay_;
  Eigen::VectorXd y_;
};

// Shifted Legendre polynomial P_i(r) on [0, 1] (P_0 = 1, P_1 = 2r - 1), from
// the three-term recurrence.
double shifted_legendre(int i, double r);

// out[i] = P_i(r) for i < out.size().
void shifted_legendre_basis(double r, std::span<double> out);

// Estimate of u(t - r * theta) from the memory state: sum_i P_i(r) m_i.
double legendre_reconstruct(const Eigen::VectorXd& memory, double r);

}  // namespace hslmu
