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

// Central finite-difference oracle for the training loss. The loss is
// assembled here from forward logits (mean softmax cross-entropy plus the
// L2 term on the output weights) so that bptt_gradients is checked against
// an independent reduction.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hslmu/network.hpp"
#include "hslmu/training.hpp"

namespace hslmu::testing {

inline double reference_loss(const Network& net, const Batch& batch, const Resolutions& omegas,
                             QuantizeMode mode, double l2) {
  ForwardOptions opt;
  opt.omegas = omegas;
  opt.mode = mode;
  const auto r = forward_sequence(net, batch.inputs, batch.residual_seeds, opt);
  double ce = 0.0;
  for (Eigen::Index b = 0; b < r.logits.cols(); ++b) {
    const double top = r.logits.col(b).maxCoeff();
    double z = 0.0;
    for (Eigen::Index k = 0; k < r.logits.rows(); ++k) z += std::exp(r.logits(k, b) - top);
    ce += top + std::log(z) - r.logits(batch.labels[static_cast<std::size_t>(b)], b);
  }
  return ce / static_cast<double>(r.logits.cols()) +
         l2 * net.params().output_weights.squaredNorm();
}

struct TensorCheck {
  std::string name;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(norms)
};

inline std::vector<TensorCheck> finite_difference_check(Network net, const Batch& batch,
                                                        const Resolutions& omegas,
                                                        QuantizeMode mode, double l2,
                                                        double step) {
  GradientOptions gopt;
  gopt.omegas = omegas;
  gopt.mode = mode;
  gopt.l2 = l2;
  const auto analytic = bptt_gradients(net, batch, gopt);
  const auto grads = analytic.gradients.tensors();
  auto params = net.params().tensors();
  std::vector<TensorCheck> out;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    TensorCheck c;
    c.name = std::string(params[ti].name);
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (Eigen::Index j = 0; j < params[ti].size(); ++j) {
      double& w = params[ti].data[j];
      const double saved = w;
      w = saved + step;
      const double up = reference_loss(net, batch, omegas, mode, l2);
      w = saved - step;
      const double down = reference_loss(net, batch, omegas, mode, l2);
      w = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grads[ti].data[j];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
    }
    c.analytic_norm = std::sqrt(na);
    c.numeric_norm = std::sqrt(nn);
    const double scale = std::max(c.analytic_norm, c.numeric_norm);
    c.relative_error = scale > 0.0 ? std::sqrt(diff) / scale : 0.0;
    out.push_back(c);
  }
  return out;
}

// Tiny smooth-regime network: positive hidden bias keeps the LIF drive above
// threshold, small weights keep the memory inside the clip range.
inline Network gradient_check_network(std::uint64_t seed, int classes = 10) {
  CellConfig cfg;
  cfg.hidden = 4;
  cfg.order = 4;
  cfg.classes = classes;
  cfg.theta_bar = 20.0;
  Network net(cfg);
  std::mt19937_64 rng(seed);
  auto draw = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto& p = net.params();
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = draw(-0.1, 0.1);
  }
  for (Eigen::Index i = 0; i < p.hidden_bias.size(); ++i) p.hidden_bias(i) = draw(0.5, 1.0);
  p.input_encoder(0) = draw(0.5, 1.0);
  for (Eigen::Index i = 0; i < p.output_weights.size(); ++i) p.output_weights.data()[i] = draw(-1.0, 1.0);
  return net;
}

inline Batch gradient_check_batch(int steps, int sequences, std::uint64_t seed, int classes) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Batch b;
  b.inputs.resize(steps, sequences);
  for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = u(rng);
  for (int s = 0; s < sequences; ++s) {
    b.labels.push_back(s % classes);
    b.residual_seeds.push_back(seed + static_cast<std::uint64_t>(s));
  }
  return b;
}

}  // namespace hslmu::testing
