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

#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "hslmu/lmu.hpp"
#include "hslmu/network.hpp"
#include "hslmu/quantizer.hpp"
#include "hslmu/training.hpp"

namespace {

using namespace hslmu;

void BM_QuantizeStep(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> acts(4096);
  for (auto& a : acts) a = u(rng);
  QuantizerState q{0.5, Resolution(static_cast<double>(state.range(0)))};
  double sink = 0.0;
  for (auto _ : state) {
    for (double a : acts) sink += q.step(a);
  }
  benchmark::DoNotOptimize(sink);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(acts.size()));
}
BENCHMARK(BM_QuantizeStep)->Arg(1)->Arg(255);

Network make_network(int size) {
  CellConfig c;
  c.hidden = size;
  c.order = size;
  c.theta_bar = 784.0;
  Network net(c);
  initialize(net, 1);
  return net;
}

void BM_CellStep(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto batch = static_cast<std::size_t>(state.range(1));
  const Network net = make_network(size);
  std::vector<std::uint64_t> seeds(batch);
  std::iota(seeds.begin(), seeds.end(), 0);
  CellState cs = net.initial_state(seeds);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(1, static_cast<Eigen::Index>(batch));
  const StepOptions opt{{Resolution(1.0), Resolution(2.0)}, QuantizeMode::kQuantized, false, false};
  for (auto _ : state) {
    cell_step(net, cs, x, opt);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_CellStep)->Args({32, 50})->Args({128, 50})->Args({128, 500});

void BM_Bptt(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int steps = static_cast<int>(state.range(1));
  const Network net = make_network(size);
  Batch b;
  b.inputs = Eigen::MatrixXd::Random(steps, 25);
  for (int i = 0; i < 25; ++i) {
    b.labels.push_back(i % 10);
    b.residual_seeds.push_back(static_cast<std::uint64_t>(i));
  }
  GradientOptions opt;
  opt.omegas = {Resolution(1.0), Resolution(2.0)};
  opt.l2 = 0.01;
  for (auto _ : state) {
    auto g = bptt_gradients(net, b, opt);
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetItemsProcessed(state.iterations() * 25);
}
BENCHMARK(BM_Bptt)->Args({32, 196})->Args({128, 784})->Unit(benchmark::kMillisecond);

void BM_DiscretizeZoh(benchmark::State& state) {
  const auto c = make_legendre_matrices(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto s = discretize_zoh(c, 784.0);
    benchmark::DoNotOptimize(s.A.data());
  }
}
BENCHMARK(BM_DiscretizeZoh)->Arg(32)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
