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

#include "hslmu/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "hslmu/error.hpp"
#include "hslmu/rng.hpp"

namespace hslmu {

void TrainPlan::validate() const {
  for (const auto* r : {&hidden_omega, &memory_omega}) {
    if (!(r->low > 0.0) || !(r->high >= r->low) || !std::isfinite(r->high)) {
      throw ConfigError("schedule: omega_high >= omega_low > 0 required");
    }
  }
  if (interp_epochs < 2) throw ConfigError("schedule.interp_epochs must be >= 2");
  if (max_epochs < 1) throw ConfigError("training.max_epochs must be >= 1");
  if (fine_tune_patience < 1) throw ConfigError("training.patience must be >= 1");
  if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (chunk_size < 1) throw ConfigError("training.chunk_size must be >= 1");
  if (threads < 1) throw ConfigError("training.threads must be >= 1");
  if (!(adam.learning_rate > 0.0) || !(adam.epsilon > 0.0) || adam.beta1 < 0.0 ||
      adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ConfigError("training: invalid Adam hyperparameters");
  }
  if (l2 < 0.0) throw ConfigError("training.l2 must be >= 0");
}

double schedule_omega(const TrainPlan& plan, int epoch, Population which) {
  if (plan.interp_epochs < 2) throw ConfigError("schedule.interp_epochs must be >= 2");
  if (epoch < 0) throw ConfigError("schedule_omega: negative epoch");
  const OmegaRange& r = which == Population::kHidden ? plan.hidden_omega : plan.memory_omega;
  if (epoch >= plan.interp_epochs - 1) return r.low;
  if (epoch == 0) return r.high;
  const double frac = static_cast<double>(epoch) / (plan.interp_epochs - 1);
  return r.high * std::pow(r.low / r.high, frac);
}

Resolutions scheduled_resolutions(const TrainPlan& plan, int epoch) {
  return Resolutions{Resolution(schedule_omega(plan, epoch, Population::kHidden)),
                     Resolution(schedule_omega(plan, epoch, Population::kMemory))};
}

std::uint64_t residual_seed(std::uint64_t root, std::string_view purpose, std::uint64_t epoch,
                            std::uint64_t index) {
  return derive_seed(derive_seed(root, streams::kResiduals, epoch), purpose, index);
}

Batch make_batch(const SequenceSplit& split, std::span<const std::size_t> rows,
                 std::uint64_t root_seed, std::string_view purpose, std::uint64_t epoch) {
  Batch b;
  b.inputs = split.gather(rows);
  b.labels.reserve(rows.size());
  b.residual_seeds.reserve(rows.size());
  for (auto r : rows) {
    b.labels.push_back(split.labels()[r]);
    b.residual_seeds.push_back(residual_seed(root_seed, purpose, epoch, r));
  }
  return b;
}

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int label) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return lse - logits(label);
}

namespace {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items write
// to disjoint slots, so the caller can reduce them in index order.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct ChunkGradient {
  Parameters grads;
  double ce_sum = 0.0;
  std::size_t correct = 0;
};

// Forward with a tape, then the reverse sweep. Gradients are of
// (1 / batch_total) * sum of per-sequence cross-entropies.
ChunkGradient chunk_gradient(const Network& net, const Batch& batch, std::size_t begin,
                             std::size_t end, const GradientOptions& options,
                             double batch_total) {
  const auto& cfg = net.config();
  const auto& p = net.params();
  const auto& sys = net.memory_system().compensated;
  const int in = cfg.input_dim;
  const int steps = static_cast<int>(batch.inputs.rows() / in);
  const auto cols = static_cast<Eigen::Index>(end - begin);
  const auto first = static_cast<Eigen::Index>(begin);

  const std::span<const std::uint64_t> seeds(batch.residual_seeds.data() + begin, end - begin);
  CellState state = net.initial_state(seeds);
  const StepOptions step_opts{options.omegas, options.mode, true, false};

  // hidden[t] / memory[t] hold the activities entering step t (index 0 is the
  // initial zero state); slopes[t] belong to step t.
  std::vector<Eigen::MatrixXd> hidden(steps + 1), memory(steps + 1);
  std::vector<Eigen::MatrixXd> hidden_slope(steps), memory_slope(steps);
  hidden[0] = state.hidden;
  memory[0] = state.memory;
  StepRecord record;
  const auto inputs = batch.inputs.middleCols(first, cols);
  for (int t = 0; t < steps; ++t) {
    cell_step(net, state, inputs.middleRows(t * in, in), step_opts, &record);
    hidden[t + 1] = state.hidden;
    memory[t + 1] = state.memory;
    hidden_slope[t] = std::move(record.hidden_slope);
    memory_slope[t] = std::move(record.memory_slope);
  }

  ChunkGradient out;
  out.grads = Parameters::zeros(cfg);
  auto& g = out.grads;

  const Eigen::MatrixXd logits = output_logits(net, state);
  Eigen::MatrixXd dlogits(logits.rows(), cols);
  for (Eigen::Index b = 0; b < cols; ++b) {
    const int label = batch.labels[static_cast<std::size_t>(first + b)];
    if (label < 0 || label >= cfg.classes) throw ConfigError("label out of range for classes");
    out.ce_sum += cross_entropy(logits.col(b), label);
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < logits.rows(); ++k) {
      if (logits(k, b) > logits(arg, b)) arg = k;
    }
    if (arg == label) ++out.correct;
    const double top = logits.col(b).maxCoeff();
    Eigen::VectorXd e = (logits.col(b).array() - top).exp();
    e /= e.sum();
    e(label) -= 1.0;
    dlogits.col(b) = e / batch_total;
  }
  g.output_bias = dlogits.rowwise().sum();

  const double ao = net.output_decay();
  const double ah = net.hidden_decay();
  const double am = net.memory_decay();
  const int n = cfg.hidden;
  const int d = cfg.order;

  Eigen::MatrixXd g_out = dlogits;  // dL/d output filter at step t
  Eigen::MatrixXd g_hf = Eigen::MatrixXd::Zero(n, cols);  // dL/d hidden filter
  Eigen::MatrixXd g_mf = Eigen::MatrixXd::Zero(d, cols);  // dL/d memory filter
  Eigen::MatrixXd g_drive_next = Eigen::MatrixXd::Zero(n, cols);
  Eigen::MatrixXd g_mem_in_next = Eigen::MatrixXd::Zero(d, cols);
  Eigen::RowVectorXd g_u_next = Eigen::RowVectorXd::Zero(cols);
  Eigen::MatrixXd dh(n, cols), dm(d, cols), g_drive(n, cols), g_mem_in(d, cols);
  Eigen::RowVectorXd g_u(cols);

  for (int t = steps - 1; t >= 0; --t) {
    const auto x = inputs.middleRows(t * in, in);
    const Eigen::MatrixXd& h_t = hidden[t + 1];
    const Eigen::MatrixXd& h_prev = hidden[t];
    const Eigen::MatrixXd& m_t = memory[t + 1];
    const Eigen::MatrixXd& m_prev = memory[t];

    // Hidden output at step t feeds the output filter, the next drive and
    // the next memory input.
    dh.noalias() = (1.0 - ao) * (p.output_weights.transpose() * g_out);
    dh.noalias() += p.recurrent_weights.transpose() * g_drive_next;
    dh.noalias() += p.hidden_encoder * g_u_next;
    g.output_weights.noalias() += (1.0 - ao) * (g_out * h_t.transpose());
    g_out *= ao;

    g_hf = hidden_slope[t].cwiseProduct(dh) + ah * g_hf;
    g_drive = (1.0 - ah) * g_hf;
    g.input_weights.noalias() += g_drive * x.transpose();
    g.recurrent_weights.noalias() += g_drive * h_prev.transpose();
    g.memory_weights.noalias() += g_drive * m_t.transpose();
    g.hidden_bias += g_drive.rowwise().sum();

    // Memory output at step t feeds the current drive, the next memory filter
    // input and the next memory input.
    dm.noalias() = p.memory_weights.transpose() * g_drive;
    dm.noalias() += sys.A.transpose() * g_mem_in_next;
    dm.noalias() += p.memory_encoder * g_u_next;

    g_mf = memory_slope[t].cwiseProduct(dm) + am * g_mf;
    g_mem_in = (1.0 - am) * g_mf;
    g_u.noalias() = sys.B.transpose() * g_mem_in;
    g.input_encoder.noalias() += x * g_u.transpose();
    g.hidden_encoder.noalias() += h_prev * g_u.transpose();
    g.memory_encoder.noalias() += m_prev * g_u.transpose();

    g_drive_next.swap(g_drive);
    g_mem_in_next.swap(g_mem_in);
    g_u_next = g_u;
  }
  return out;
}

}  // namespace

GradientResult bptt_gradients(const Network& net, const Batch& batch,
                              const GradientOptions& options) {
  const auto& cfg = net.config();
  const std::size_t count = batch.size();
  if (count == 0) throw ConfigError("bptt_gradients: empty batch");
  if (static_cast<std::size_t>(batch.inputs.cols()) != count ||
      batch.residual_seeds.size() != count) {
    throw ConfigError("bptt_gradients: batch fields disagree in size");
  }
  if (batch.inputs.rows() < cfg.input_dim || batch.inputs.rows() % cfg.input_dim != 0) {
    throw ConfigError("bptt_gradients: input rows must be a positive multiple of input_dim");
  }
  if (!net.params().all_finite()) throw NumericalError("bptt_gradients: non-finite parameters");

  const std::size_t chunk = std::max<std::size_t>(options.chunk_size, 1);
  const std::size_t chunks = (count + chunk - 1) / chunk;
  std::vector<ChunkGradient> parts(chunks);
  parallel_for(chunks, options.threads, [&](std::size_t i) {
    const std::size_t begin = i * chunk;
    parts[i] = chunk_gradient(net, batch, begin, std::min(count, begin + chunk), options,
                              static_cast<double>(count));
  });

  GradientResult r;
  r.gradients = std::move(parts[0].grads);
  double ce_sum = parts[0].ce_sum;
  r.correct = parts[0].correct;
  for (std::size_t i = 1; i < chunks; ++i) {
    r.gradients += parts[i].grads;
    ce_sum += parts[i].ce_sum;
    r.correct += parts[i].correct;
  }
  const auto& w_out = net.params().output_weights;
  r.cross_entropy = ce_sum / static_cast<double>(count);
  r.regularization = options.l2 * w_out.squaredNorm();
  r.loss = r.cross_entropy + r.regularization;
  r.gradients.output_weights += (2.0 * options.l2) * w_out;
  if (!std::isfinite(r.loss)) {
    throw NumericalError("bptt_gradients: non-finite loss (" + std::to_string(r.loss) + ")");
  }
  return r;
}

double clip_global_norm(Parameters& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

AdamState AdamState::zeros(const CellConfig& config) {
  return AdamState{Parameters::zeros(config), Parameters::zeros(config), 0};
}

void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
               const AdamConfig& c) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first.tensors();
  auto v = state.second.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size() || p[i].size() != m[i].size() ||
        p[i].size() != v[i].size()) {
      throw ConfigError("adam_step: shape mismatch in " + std::string(p[i].name));
    }
    for (Eigen::Index j = 0; j < p[i].size(); ++j) {
      const double gj = g[i].data[j];
      m[i].data[j] = c.beta1 * m[i].data[j] + (1.0 - c.beta1) * gj;
      v[i].data[j] = c.beta2 * v[i].data[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = m[i].data[j] / c1;
      const double vhat = v[i].data[j] / c2;
      p[i].data[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

void initialize(Network& net, std::uint64_t seed) {
  const auto& cfg = net.config();
  Parameters& p = net.params();
  p = Parameters::zeros(cfg);
  p.input_encoder.setOnes();
  Rng rng = make_rng(seed, streams::kInit);
  const double normal_std = std::sqrt(2.0 / (cfg.hidden + cfg.order));
  for (Eigen::Index i = 0; i < p.memory_weights.size(); ++i) {
    p.memory_weights.data()[i] = normal_std * standard_normal(rng);
  }
  const double limit = std::sqrt(6.0 / (cfg.hidden + cfg.classes));
  for (Eigen::Index i = 0; i < p.output_weights.size(); ++i) {
    p.output_weights.data()[i] = limit * (2.0 * uniform01(rng) - 1.0);
  }
}

EvalResult evaluate(const Network& net, const SequenceSplit& split, const EvalOptions& options) {
  const std::size_t count = split.size();
  const std::size_t chunk = std::max<std::size_t>(options.chunk_size, 1);
  const std::size_t chunks = (count + chunk - 1) / chunk;

  struct Part {
    double ce_sum = 0.0;
    std::size_t correct = 0;
    std::vector<int> predictions;
    ActivityStats activity;
  };
  std::vector<Part> parts(chunks);
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    std::vector<std::size_t> rows;
    for (std::size_t r = c * chunk; r < std::min(count, (c + 1) * chunk); ++r) rows.push_back(r);
    const Batch b = make_batch(split, rows, options.seed, "eval", 0);
    Part& part = parts[c];
    part.activity = ActivityStats::for_network(net.config(), options.omegas);
    ForwardOptions fwd{options.omegas, options.mode,
                       [&part](int, const Eigen::MatrixXd& hc, const Eigen::MatrixXd& mc) {
                         part.activity.add(hc, mc);
                       },
                       false};
    const auto result = forward_sequence(net, b.inputs, b.residual_seeds, fwd);
    part.predictions = argmax_columns(result.logits);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      part.ce_sum += cross_entropy(result.logits.col(col), b.labels[j]);
      if (part.predictions[j] == b.labels[j]) ++part.correct;
    }
  });

  EvalResult r;
  r.count = count;
  r.activity = ActivityStats::for_network(net.config(), options.omegas);
  double ce_sum = 0.0;
  for (const auto& part : parts) {
    ce_sum += part.ce_sum;
    r.correct += part.correct;
    r.predictions.insert(r.predictions.end(), part.predictions.begin(), part.predictions.end());
    r.activity.merge(part.activity);
  }
  r.loss = count ? ce_sum / static_cast<double>(count) : 0.0;
  return r;
}

std::string to_json_line(const EpochRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["phase"] = rec.phase;
  j["omega_hidden"] = rec.omega_hidden;
  j["omega_memory"] = rec.omega_memory;
  j["train_loss"] = rec.train_loss;
  j["train_accuracy"] = rec.train_accuracy;
  j["val_loss"] = rec.val_loss;
  j["val_accuracy"] = rec.val_accuracy;
  j["hidden_spike_fraction"] = rec.hidden_spike_fraction;
  j["memory_zero_fraction"] = rec.memory_zero_fraction;
  j["memory_levels"] = rec.memory_levels;
  j["steps"] = rec.steps;
  j["improved"] = rec.improved;
  return j.dump();
}

TrainResult train(Network net, const TrainPlan& plan, const SequenceDataset& data,
                  const TrainHooks& hooks) {
  plan.validate();
  if (data.train.size() == 0 || data.validation.size() == 0) {
    throw DataError("train: training and validation splits must be non-empty");
  }
  TrainResult result{net, net, AdamState::zeros(net.config()), std::nullopt, {}, false, {}};
  AdamState& opt = result.optimizer;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 0; epoch < plan.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const Resolutions omegas = scheduled_resolutions(plan, epoch);
    const GradientOptions gopts{omegas, QuantizeMode::kQuantized, plan.l2, plan.chunk_size,
                                plan.threads};
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = epoch < plan.interp_epochs ? "sweep" : "fine-tune";
    rec.omega_hidden = omegas.hidden.value();
    rec.omega_memory = omegas.memory.value();

    double loss_sum = 0.0;
    std::size_t correct = 0;
    try {
      for (const auto& rows :
           epoch_batches(data.train.size(), plan.batch_size, plan.seed, epoch)) {
        const Batch batch = make_batch(data.train, rows, plan.seed, "train",
                                       static_cast<std::uint64_t>(epoch));
        GradientResult g = bptt_gradients(net, batch, gopts);
        clip_global_norm(g.gradients, plan.clip_norm);
        adam_step(net.params(), g.gradients, opt, plan.adam);
        if (!net.params().all_finite()) {
          throw NumericalError("train: parameters became non-finite at step " +
                               std::to_string(opt.step));
        }
        loss_sum += g.loss * static_cast<double>(batch.size());
        correct += g.correct;
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.failure = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    rec.train_loss = loss_sum / static_cast<double>(data.train.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.train.size());

    const EvalResult val = evaluate(
        net, data.validation,
        EvalOptions{omegas, QuantizeMode::kQuantized, plan.chunk_size, plan.threads, plan.seed});
    if (!std::isfinite(val.loss)) {
      result.diverged = true;
      result.failure = "epoch " + std::to_string(epoch) + ": non-finite validation loss";
      break;
    }
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy();
    const auto sparsity = sparsity_metric(val.activity.populations());
    rec.hidden_spike_fraction = sparsity[0].nonzero_fraction;
    rec.memory_zero_fraction = sparsity[1].zero_fraction;
    rec.memory_levels = val.activity.memory.max_count - val.activity.memory.min_count + 1;
    rec.steps = opt.step;

    const bool eligible = epoch >= plan.interp_epochs - 1;
    if (eligible) {
      if (val.loss < best_loss) {
        best_loss = val.loss;
        rec.improved = true;
        stale = 0;
        result.best = net;
        result.best_record = rec;
      } else {
        ++stale;
      }
    }
    result.last = net;
    result.log.push_back(rec);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (hooks.on_epoch) hooks.on_epoch(rec, wall);
    if (rec.improved && hooks.on_best) hooks.on_best(net, opt, rec);
    if (epoch >= plan.interp_epochs && stale >= plan.fine_tune_patience) break;
  }
  if (!result.best_record) result.best = result.last;
  return result;
}

}  // namespace hslmu
