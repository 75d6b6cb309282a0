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

#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "hslmu/error.hpp"
#include "hslmu/training.hpp"
#include "property.hpp"
#include "synthetic.hpp"

namespace hslmu {
namespace {

using testing::for_all;
using testing::Gen;

TrainPlan smnist_plan() {
  TrainPlan p;
  p.memory_omega = {32.0, 2.0};
  p.hidden_omega = {16.0, 1.0};
  p.interp_epochs = 10;
  return p;
}

TEST(Schedule, MemoryEndpoints) {
  const auto p = smnist_plan();
  EXPECT_EQ(schedule_omega(p, 0, Population::kMemory), 32.0);
  EXPECT_NEAR(schedule_omega(p, p.interp_epochs - 1, Population::kMemory), 2.0, 1e-12);
}

TEST(Schedule, OddLengthMidpointIsGeometricMean) {
  auto p = smnist_plan();
  p.interp_epochs = 5;
  EXPECT_NEAR(schedule_omega(p, 2, Population::kMemory), std::sqrt(32.0 * 2.0), 1e-12);
  EXPECT_NEAR(schedule_omega(p, 2, Population::kMemory), 8.0, 1e-12);
}

TEST(Schedule, HiddenTailIsLow) {
  const auto p = smnist_plan();
  for (int e = p.interp_epochs; e < p.interp_epochs + 5; ++e) {
    EXPECT_EQ(schedule_omega(p, e, Population::kHidden), 1.0);
  }
}

TEST(Schedule, GeometricThenConstant) {
  const auto p = smnist_plan();
  const double ratio = std::pow(2.0 / 32.0, 1.0 / (p.interp_epochs - 1));
  for (int e = 1; e < p.interp_epochs; ++e) {
    EXPECT_NEAR(schedule_omega(p, e, Population::kMemory) /
                    schedule_omega(p, e - 1, Population::kMemory),
                ratio, 1e-12);
  }
}

TEST(Schedule, RejectsDegenerate) {
  auto p = smnist_plan();
  p.interp_epochs = 1;
  EXPECT_THROW(schedule_omega(p, 0, Population::kHidden), ConfigError);
  EXPECT_THROW(p.validate(), ConfigError);
  p = smnist_plan();
  p.hidden_omega = {1.0, 16.0};
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(CrossEntropy, UniformLogits) {
  EXPECT_NEAR(cross_entropy(Eigen::VectorXd::Constant(10, 0.3), 4), std::log(10.0), 1e-14);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(CrossEntropy, StableForLargeLogits) {
  Eigen::VectorXd z(3);
  z << 1000.0, 0.0, -1000.0;
  EXPECT_NEAR(cross_entropy(z, 0), 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy(z, 1), 1000.0, 1e-9);
}

TEST(Bptt, MatchesFiniteDifferencesIdeal) {
  const auto net = testing::gradient_check_network(3);
  const auto batch = testing::gradient_check_batch(20, 3, 11, 10);
  const Resolutions omegas{Resolution::ann(), Resolution::ann()};
  for (const auto& c :
       testing::finite_difference_check(net, batch, omegas, QuantizeMode::kIdeal, 0.01, 1e-5)) {
    EXPECT_LT(c.relative_error, 1e-4) << c.name << " |g| " << c.analytic_norm;
    EXPECT_GT(c.numeric_norm, 0.0) << c.name;
  }
}

TEST(Bptt, LossComponents) {
  const auto net = testing::gradient_check_network(4);
  const auto batch = testing::gradient_check_batch(10, 4, 12, 10);
  GradientOptions opt;
  opt.l2 = 0.01;
  opt.mode = QuantizeMode::kIdeal;
  const auto r = bptt_gradients(net, batch, opt);
  const double ref = testing::reference_loss(net, batch, opt.omegas, opt.mode, opt.l2);
  EXPECT_NEAR(r.loss, ref, 1e-12);
  EXPECT_DOUBLE_EQ(r.regularization, 0.01 * net.params().output_weights.squaredNorm());
  EXPECT_DOUBLE_EQ(r.loss, r.cross_entropy + r.regularization);
}

TEST(Bptt, DoublingL2DoublesRegularization) {
  const auto net = testing::gradient_check_network(5);
  const auto batch = testing::gradient_check_batch(10, 2, 13, 10);
  GradientOptions opt;
  opt.omegas = {Resolution(4.0), Resolution(4.0)};
  opt.l2 = 0.01;
  const auto a = bptt_gradients(net, batch, opt);
  opt.l2 = 0.02;
  const auto b = bptt_gradients(net, batch, opt);
  EXPECT_EQ(b.regularization, 2.0 * a.regularization);
  EXPECT_EQ(a.cross_entropy, b.cross_entropy);
}

TEST(Bptt, ZeroWeightsGiveZeroRecurrentGradient) {
  CellConfig cfg;
  cfg.hidden = 6;
  cfg.order = 5;
  cfg.theta_bar = 20.0;
  Network net(cfg);
  net.params().input_encoder.setOnes();
  Gen g(14);
  for (Eigen::Index i = 0; i < net.params().output_weights.size(); ++i) {
    net.params().output_weights.data()[i] = g.uniform(-1.0, 1.0);
  }
  const auto batch = testing::gradient_check_batch(30, 4, 15, 10);
  GradientOptions opt;
  opt.omegas = {Resolution(1.0), Resolution(2.0)};
  const auto r = bptt_gradients(net, batch, opt);
  EXPECT_TRUE(r.gradients.recurrent_weights.isZero(0.0));
}

TEST(Bptt, FirstStepRecurrentGradientZeroAfterInit) {
  CellConfig cfg;
  cfg.hidden = 6;
  cfg.order = 5;
  cfg.theta_bar = 20.0;
  Network net(cfg);
  initialize(net, 16);
  const auto batch = testing::gradient_check_batch(1, 4, 17, 10);
  GradientOptions opt;
  opt.omegas = {Resolution(16.0), Resolution(32.0)};
  const auto r = bptt_gradients(net, batch, opt);
  EXPECT_TRUE(r.gradients.recurrent_weights.isZero(0.0));
  EXPECT_FALSE(r.gradients.output_weights.isZero(0.0));
}

TEST(Bptt, StraightThroughIndependentOfOmega) {
  const auto net = testing::gradient_check_network(6);
  const auto batch = testing::gradient_check_batch(15, 3, 18, 10);
  GradientOptions opt;
  opt.mode = QuantizeMode::kIdeal;
  opt.l2 = 0.01;
  opt.omegas = {Resolution(1.0), Resolution(1.0)};
  const auto base = bptt_gradients(net, batch, opt);
  for (double w : {16.0, 4294967296.0}) {
    opt.omegas = {Resolution(w), Resolution(w)};
    const auto other = bptt_gradients(net, batch, opt);
    EXPECT_TRUE(other.gradients == base.gradients) << "omega " << w;
  }
}

TEST(Bptt, QuantizedGradientsDifferOnlyThroughActivity) {
  const auto net = testing::gradient_check_network(7);
  const auto batch = testing::gradient_check_batch(15, 3, 19, 10);
  GradientOptions opt;
  opt.omegas = {Resolution(1.0), Resolution(2.0)};
  const auto coarse = bptt_gradients(net, batch, opt);
  opt.omegas = {Resolution::ann(), Resolution::ann()};
  const auto fine = bptt_gradients(net, batch, opt);
  opt.mode = QuantizeMode::kIdeal;
  const auto ideal = bptt_gradients(net, batch, opt);
  EXPECT_FALSE(coarse.gradients == fine.gradients);
  auto diff = fine.gradients;
  diff *= -1.0;
  diff += ideal.gradients;
  EXPECT_LT(std::sqrt(diff.squared_norm()), 1e-6);
}

TEST(Bptt, ThreadCountDoesNotChangeResult) {
  const auto net = testing::gradient_check_network(8);
  const auto batch = testing::gradient_check_batch(12, 10, 20, 10);
  GradientOptions opt;
  opt.omegas = {Resolution(3.0), Resolution(5.0)};
  opt.chunk_size = 3;
  const auto one = bptt_gradients(net, batch, opt);
  opt.threads = 4;
  const auto four = bptt_gradients(net, batch, opt);
  EXPECT_TRUE(one.gradients == four.gradients);
  EXPECT_EQ(one.loss, four.loss);
}

TEST(Bptt, RejectsNonFiniteParameters) {
  auto net = testing::gradient_check_network(9);
  net.params().hidden_bias(0) = std::nan("");
  const auto batch = testing::gradient_check_batch(5, 2, 21, 10);
  EXPECT_THROW(bptt_gradients(net, batch, {}), NumericalError);
}

TEST(ClipGlobalNorm, ScalesToCap) {
  auto p = Parameters::zeros(CellConfig{});
  p.hidden_bias(0) = 30.0;
  p.output_bias(1) = 40.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(p, 10.0), 50.0);
  EXPECT_NEAR(std::sqrt(p.squared_norm()), 10.0, 1e-12);
  EXPECT_NEAR(p.hidden_bias(0), 6.0, 1e-12);
  auto q = Parameters::zeros(CellConfig{});
  q.hidden_bias(0) = 3.0;
  clip_global_norm(q, 10.0);
  EXPECT_EQ(q.hidden_bias(0), 3.0);
}

CellConfig tiny() {
  CellConfig c;
  c.hidden = 3;
  c.order = 2;
  c.classes = 2;
  c.theta_bar = 5.0;
  return c;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Network net(tiny());
  Gen g(22);
  for (auto& t : net.params().tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = g.uniform(-1, 1);
  }
  const auto before = net.params();
  auto state = AdamState::zeros(tiny());
  adam_step(net.params(), Parameters::zeros(tiny()), state, AdamConfig{});
  EXPECT_TRUE(net.params() == before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  Network net(tiny());
  auto grads = Parameters::zeros(tiny());
  grads.hidden_bias << 0.5, -2.0, 1e-3;
  auto state = AdamState::zeros(tiny());
  const AdamConfig cfg;
  adam_step(net.params(), grads, state, cfg);
  for (int i = 0; i < 3; ++i) {
    const double g = grads.hidden_bias(i);
    EXPECT_NEAR(net.params().hidden_bias(i), -cfg.learning_rate * g / (std::abs(g) + cfg.epsilon),
                1e-12);
    EXPECT_NEAR(std::abs(net.params().hidden_bias(i)), cfg.learning_rate, 1e-6);
  }
  EXPECT_EQ(net.params().output_bias(0), 0.0);
}

TEST(Adam, DescendsQuadratic) {
  // loss = (w - 3)^2 on one scalar parameter.
  Network net(tiny());
  auto state = AdamState::zeros(tiny());
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  auto loss = [&] { return std::pow(net.params().output_bias(0) - 3.0, 2); };
  const double start = loss();
  for (int step = 0; step < 2; ++step) {
    auto grads = Parameters::zeros(tiny());
    grads.output_bias(0) = 2.0 * (net.params().output_bias(0) - 3.0);
    adam_step(net.params(), grads, state, cfg);
  }
  EXPECT_LT(loss(), start);
}

TEST(Adam, MatchesTextbookRecurrence) {
  Network net(tiny());
  auto state = AdamState::zeros(tiny());
  const AdamConfig cfg;
  double w = 0.0, m = 0.0, v = 0.0;
  Gen g(23);
  for (int t = 1; t <= 20; ++t) {
    const double grad = g.uniform(-1.0, 1.0);
    auto grads = Parameters::zeros(tiny());
    grads.memory_encoder(1) = grad;
    adam_step(net.params(), grads, state, cfg);
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    w -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    ASSERT_NEAR(net.params().memory_encoder(1), w, 1e-12) << "step " << t;
  }
}

TEST(Initialize, ZeroExceptEncoderAndDenseWeights) {
  CellConfig cfg;
  cfg.hidden = 16;
  cfg.order = 8;
  Network net(cfg);
  initialize(net, 1);
  const auto& p = net.params();
  EXPECT_TRUE(p.input_encoder.isOnes(0.0));
  EXPECT_TRUE(p.input_weights.isZero(0.0));
  EXPECT_TRUE(p.recurrent_weights.isZero(0.0));
  EXPECT_TRUE(p.hidden_bias.isZero(0.0));
  EXPECT_TRUE(p.hidden_encoder.isZero(0.0));
  EXPECT_TRUE(p.memory_encoder.isZero(0.0));
  EXPECT_TRUE(p.output_bias.isZero(0.0));
  EXPECT_FALSE(p.memory_weights.isZero(0.0));
  const double limit = std::sqrt(6.0 / (16 + 10));
  EXPECT_LE(p.output_weights.cwiseAbs().maxCoeff(), limit);
  EXPECT_FALSE(p.output_weights.isZero(0.0));
}

TEST(Initialize, XavierNormalStd) {
  CellConfig cfg;
  cfg.hidden = 128;
  cfg.order = 128;
  Network net(cfg);
  initialize(net, 2);
  const auto& w = net.params().memory_weights;
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  const double target = std::sqrt(2.0 / 256.0);
  EXPECT_NEAR(std::sqrt(var) / target, 1.0, 0.05);
}

TEST(Initialize, Deterministic) {
  CellConfig cfg;
  cfg.hidden = 8;
  cfg.order = 8;
  Network a(cfg), b(cfg), c(cfg);
  initialize(a, 3);
  initialize(b, 3);
  initialize(c, 4);
  EXPECT_TRUE(a.params() == b.params());
  EXPECT_FALSE(a.params() == c.params());
}

TEST(MakeBatch, ResidualSeedsKeyedByPurposeEpochAndRow) {
  const auto data = testing::synthetic_dataset(12, 3, 3);
  const std::vector<std::size_t> rows{4, 0, 7};
  const auto a = make_batch(data.train, rows, 5, "train", 0);
  const auto b = make_batch(data.train, rows, 5, "train", 1);
  const auto c = make_batch(data.train, rows, 5, "eval", 0);
  EXPECT_EQ(a.inputs.cols(), 3);
  EXPECT_EQ(a.inputs.rows(), data.steps);
  EXPECT_EQ(a.labels[1], data.train.labels()[0]);
  std::set<std::uint64_t> all;
  for (const auto* x : {&a, &b, &c}) all.insert(x->residual_seeds.begin(), x->residual_seeds.end());
  EXPECT_EQ(all.size(), 9u);
  EXPECT_EQ(a.residual_seeds, make_batch(data.train, rows, 5, "train", 0).residual_seeds);
}

TEST(Evaluate, ThreadsAndChunksAgree) {
  const auto data = testing::synthetic_dataset(30, 30, 3);
  CellConfig cfg;
  cfg.hidden = 6;
  cfg.order = 4;
  cfg.classes = 3;
  cfg.theta_bar = data.steps;
  Network net(cfg);
  initialize(net, 5);
  EvalOptions opt{{Resolution(2.0), Resolution(4.0)}, QuantizeMode::kQuantized, 30, 1, 9};
  const auto one = evaluate(net, data.validation, opt);
  opt.chunk_size = 7;
  opt.threads = 3;
  const auto many = evaluate(net, data.validation, opt);
  EXPECT_EQ(one.count, 30u);
  EXPECT_EQ(one.correct, many.correct);
  EXPECT_EQ(one.predictions, many.predictions);
  EXPECT_NEAR(one.loss, many.loss, 1e-12);
  EXPECT_EQ(one.activity.hidden.samples, many.activity.hidden.samples);
  EXPECT_EQ(one.activity.memory.zeros, many.activity.memory.zeros);
  EXPECT_EQ(one.activity.hidden.samples, 30u * 6u * static_cast<unsigned>(data.steps));
}

TEST(EpochRecord, JsonLineRoundTrip) {
  EpochRecord r;
  r.epoch = 3;
  r.phase = "sweep";
  r.omega_hidden = 4.0;
  r.val_accuracy = 0.875;
  const auto line = to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("epoch"), 3);
  EXPECT_EQ(j.at("phase"), "sweep");
  EXPECT_EQ(j.at("omega_hidden"), 4.0);
  EXPECT_EQ(j.at("val_accuracy"), 0.875);
}

class TrainRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new SequenceDataset(testing::synthetic_dataset(60, 30, 30));
    CellConfig cfg;
    cfg.hidden = 8;
    cfg.order = 4;
    cfg.classes = 3;
    cfg.theta_bar = data_->steps;
    Network net(cfg);
    initialize(net, 1);
    initial_ = new Network(net);
    plan_.interp_epochs = 4;
    plan_.max_epochs = 10;
    plan_.fine_tune_patience = 2;
    plan_.batch_size = 10;
    plan_.adam.learning_rate = 0.01;
    plan_.seed = 7;
    result_ = new TrainResult(train(net, plan_, *data_));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete initial_;
    delete data_;
  }
  static inline SequenceDataset* data_ = nullptr;
  static inline Network* initial_ = nullptr;
  static inline TrainPlan plan_;
  static inline TrainResult* result_ = nullptr;
};

TEST_F(TrainRun, FrozenMemoryMatrices) {
  EXPECT_EQ((result_->best.memory_system().compensated.A -
             initial_->memory_system().compensated.A).norm(), 0.0);
  EXPECT_EQ((result_->last.memory_system().compensated.B -
             initial_->memory_system().compensated.B).norm(), 0.0);
  EXPECT_FALSE(result_->last.params() == initial_->params());
}

TEST_F(TrainRun, LogFollowsSchedule) {
  ASSERT_FALSE(result_->diverged) << result_->failure;
  ASSERT_GE(result_->log.size(), static_cast<std::size_t>(plan_.interp_epochs));
  for (const auto& rec : result_->log) {
    EXPECT_DOUBLE_EQ(rec.omega_hidden, schedule_omega(plan_, rec.epoch, Population::kHidden));
    EXPECT_DOUBLE_EQ(rec.omega_memory, schedule_omega(plan_, rec.epoch, Population::kMemory));
    EXPECT_EQ(rec.phase, rec.epoch < plan_.interp_epochs ? "sweep" : "fine-tune");
    EXPECT_EQ(rec.steps, 6 * (rec.epoch + 1));
  }
}

TEST_F(TrainRun, BestComesFromLowResolutionEpochs) {
  ASSERT_TRUE(result_->best_record.has_value());
  EXPECT_GE(result_->best_record->epoch, plan_.interp_epochs - 1);
  for (const auto& rec : result_->log) {
    if (rec.epoch < plan_.interp_epochs - 1) {
      EXPECT_FALSE(rec.improved);
    }
    if (rec.epoch >= plan_.interp_epochs - 1) {
      EXPECT_LE(result_->best_record->val_loss, rec.val_loss);
    }
  }
}

TEST_F(TrainRun, LearnsSyntheticTask) {
  EXPECT_GT(result_->best_record->val_accuracy, 0.9);
}

TEST_F(TrainRun, Deterministic) {
  Network net(*initial_);
  const auto again = train(net, plan_, *data_);
  ASSERT_EQ(again.log.size(), result_->log.size());
  for (std::size_t i = 0; i < again.log.size(); ++i) {
    EXPECT_EQ(to_json_line(again.log[i]), to_json_line(result_->log[i]));
  }
  EXPECT_TRUE(again.best.params() == result_->best.params());
}

TEST(Train, LossTrendsDownOnDeskTask) {
  TaskSpec spec;
  spec.classes = {0, 1, 2};
  spec.downsample = 2;
  spec.train_count = 1500;
  spec.val_count = 300;
  spec.test_count = 300;
  const std::string dir = HSLMU_TEST_DATA_DIR;
  const auto data = make_task(load_idx_pair(dir + "/desk-train-images-idx3-ubyte.gz",
                                            dir + "/desk-train-labels-idx1-ubyte.gz"),
                              load_idx_pair(dir + "/desk-t10k-images-idx3-ubyte.gz",
                                            dir + "/desk-t10k-labels-idx1-ubyte.gz"),
                              spec);
  CellConfig cfg;
  cfg.hidden = 32;
  cfg.order = 32;
  cfg.classes = 3;
  cfg.theta_bar = data.steps;
  Network net(cfg);
  initialize(net, 1);
  TrainPlan plan;
  plan.interp_epochs = 6;
  AdamState opt = AdamState::zeros(cfg);
  const GradientOptions gopt{scheduled_resolutions(plan, 0), QuantizeMode::kQuantized, 0.01, 25, 1};
  std::vector<double> losses;
  const auto batches = epoch_batches(data.train.size(), 30, 1, 0);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto batch = make_batch(data.train, batches[i], 1, "train", 0);
    auto g = bptt_gradients(net, batch, gopt);
    clip_global_norm(g.gradients, 10.0);
    adam_step(net.params(), g.gradients, opt, plan.adam);
    losses.push_back(g.loss);
  }
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += losses[static_cast<std::size_t>(i)];
    tail += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, head);
}

}  // namespace
}  // namespace hslmu
