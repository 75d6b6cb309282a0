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

#include "commands.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "hslmu/checkpoint.hpp"
#include "hslmu/config.hpp"
#include "hslmu/error.hpp"
#include "hslmu/metrics.hpp"
#include "hslmu/quantizer.hpp"
#include "hslmu/rng.hpp"
#include "hslmu/training.hpp"

namespace hslmu::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

RunConfig read_config(const fs::path& path) {
  RunConfig c = load_config(path);
  apply_env_overrides(c);
  return c;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw DataError("cannot write " + path.string());
  f << line << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

Network build_network(const RunConfig& config, const SequenceDataset& data) {
  return Network(resolve_network(config, data.steps, data.classes()));
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out) {
  const RunConfig config = read_config(args.config);
  const SequenceDataset data = load_dataset(config);
  Network net = build_network(config, data);
  initialize(net, config.training.seed);

  const fs::path dir = run_directory(config);
  fs::create_directories(dir);
  write_text(dir / "config.ini", render_config(config));
  const fs::path epochs = dir / "epochs.jsonl";
  const fs::path timing = dir / "timing.jsonl";
  write_text(epochs, "");
  write_text(timing, "");

  out << "run " << config.run_id << ": " << data.train.size() << " train / "
      << data.validation.size() << " val / " << data.test.size() << " test sequences, T = "
      << data.steps << ", classes = " << data.classes() << "\n";

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& rec, double wall) {
    const std::string line = to_json_line(rec);
    append_line(epochs, line);
    ordered_json t;
    t["epoch"] = rec.epoch;
    t["wall_seconds"] = wall;
    append_line(timing, t.dump());
    out << line << "\n" << std::flush;
  };
  hooks.on_best = [&](const Network& best, const AdamState& opt, const EpochRecord& rec) {
    save_checkpoint(dir / "best.ckpt", make_checkpoint(best.params(), &opt, rec.epoch));
  };

  TrainResult result = train(net, config.training, data, hooks);
  const int last_epoch = result.log.empty() ? 0 : result.log.back().epoch;
  save_checkpoint(dir / "final.ckpt",
                  make_checkpoint(result.last.params(), &result.optimizer, last_epoch));
  if (!result.best_record) {
    save_checkpoint(dir / "best.ckpt",
                    make_checkpoint(result.best.params(), &result.optimizer, last_epoch));
  }
  if (result.diverged) {
    throw NumericalError("training diverged: " + result.failure +
                         " (last good checkpoints kept in " + dir.string() + ")");
  }
  if (result.best_record) {
    out << "best epoch " << result.best_record->epoch << ": val_loss "
        << result.best_record->val_loss << ", val_accuracy " << result.best_record->val_accuracy
        << "\n";
  }
  out << "wrote " << (dir / "best.ckpt").string() << " and " << (dir / "final.ckpt").string()
      << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const fs::path config_path = args.config.value_or(args.checkpoint.parent_path() / "config.ini");
  const RunConfig config = read_config(config_path);
  const SequenceDataset data = load_dataset(config);
  Network net = build_network(config, data);
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  restore_parameters(ck, net.params());

  const int epoch = static_cast<int>(ck.counter("schedule.epoch").value_or(0));
  const Resolutions omegas = scheduled_resolutions(config.training, epoch);
  const SequenceSplit& split = data.split(args.split);
  EvalOptions opts{omegas, args.ideal ? QuantizeMode::kIdeal : QuantizeMode::kQuantized,
                   config.training.chunk_size, config.training.threads, config.training.seed};
  const EvalResult r = evaluate(net, split, opts);

  const auto pops = r.activity.populations();
  const auto bits = bitwidth_metric(pops);
  const double sig = significant_bits_metric(pops);
  const auto sparsity = sparsity_metric(pops);
  const auto census = count_states(net.config());
  const auto fan_out = activity_fan_out(net.config());
  const auto ops = op_census(pops, fan_out);

  ordered_json rec;
  rec["run_id"] = config.run_id;
  rec["checkpoint"] = args.checkpoint.filename().string();
  rec["split"] = args.split;
  rec["mode"] = args.ideal ? "ideal" : "quantized";
  rec["count"] = r.count;
  rec["accuracy"] = r.accuracy();
  rec["loss"] = r.loss;
  rec["omega_hidden"] = omegas.hidden.value();
  rec["omega_memory"] = omegas.memory.value();
  for (const auto& p : bits.populations) {
    rec[p.name + "_min_count"] = p.min_count;
    rec[p.name + "_max_count"] = p.max_count;
    rec[p.name + "_levels"] = p.levels;
    rec[p.name + "_bits"] = p.bits;
  }
  rec["bitwidth_average"] = bits.average;
  rec["bitwidth_bound_average"] = bits.bound_average;
  rec["significant_bits"] = sig;
  rec["hidden_spike_fraction"] = sparsity[0].nonzero_fraction;
  rec["memory_zero_fraction"] = sparsity[1].zero_fraction;
  rec["state_variables"] = census.total();
  rec["ops_skipped"] = ops.total.skipped;
  rec["ops_adds"] = ops.total.adds;
  rec["ops_multiplies"] = ops.total.multiplies;
  append_line(args.checkpoint.parent_path() / "report.jsonl", rec.dump());

  out << std::setprecision(6);
  out << "split " << args.split << " (" << r.count << " sequences, " << rec["mode"].get<std::string>()
      << ", omega_hidden " << omegas.hidden.value() << ", omega_memory " << omegas.memory.value()
      << ")\n";
  out << "accuracy " << r.accuracy() << " (" << r.correct << "/" << r.count << "), loss " << r.loss
      << "\n";
  for (const auto& p : bits.populations) {
    out << "  " << p.name << ": counts [" << p.min_count << ", " << p.max_count << "], "
        << p.levels << " levels, " << p.bits << " bits\n";
  }
  out << "bit-width " << bits.average << " (a-priori bound " << bits.bound_average << ")\n";
  out << "significant bits " << sig << "\n";
  out << "hidden spike fraction " << sparsity[0].nonzero_fraction << ", memory zero fraction "
      << sparsity[1].zero_fraction << "\n";
  out << "state variables " << census.total() << "\n";
  out << "ops: skipped " << ops.total.skipped << ", adds " << ops.total.adds << ", multiplies "
      << ops.total.multiplies << "\n";
  out << rec.dump() << "\n";
  return 0;
}

std::vector<double> parse_omega_list(std::string_view text) {
  std::vector<double> out;
  if (text == "default") {
    for (int m = 1; m <= 8; ++m) out.push_back(std::ldexp(1.0, m) - 1.0);
    out.push_back(Resolution::ann().value());
    return out;
  }
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    const std::string tok = item.substr(b, e - b + 1);
    double value = 0.0;
    try {
      std::size_t used = 0;
      if (tok.rfind("2^", 0) == 0) {
        const int k = std::stoi(tok.substr(2), &used);
        value = std::ldexp(1.0, k);
        const std::string rest = tok.substr(2 + used);
        if (rest == "-1") {
          value -= 1.0;
        } else if (!rest.empty()) {
          throw std::invalid_argument(rest);
        }
      } else {
        value = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--omegas: cannot parse '" + tok + "'");
    }
    Resolution check(value);  // validates > 0
    out.push_back(check.value());
  }
  if (out.empty()) throw ConfigError("--omegas: empty list");
  return out;
}

int cmd_sweep(const SweepArgs& args, std::ostream& out) {
  const RunConfig config = read_config(args.config);
  const auto omegas = parse_omega_list(args.omegas);
  const SequenceDataset data = load_dataset(config);
  if (args.sample >= data.train.size()) throw ConfigError("--sample exceeds the training split");
  const CellConfig cell = resolve_network(config, data.steps, data.classes());
  ActivationFn f;
  double tau = 0.0;
  if (args.population == "hidden") {
    f = cell.hidden_fn;
    tau = cell.tau_hidden;
  } else if (args.population == "memory") {
    f = cell.memory_fn;
    tau = cell.tau_memory;
  } else {
    throw ConfigError("--population must be hidden or memory");
  }

  std::vector<double> ideal(static_cast<std::size_t>(data.steps));
  for (int t = 0; t < data.steps; ++t) {
    ideal[static_cast<std::size_t>(t)] = eval_activation(f, data.train.value(args.sample, t));
  }

  const fs::path dir = run_directory(config);
  fs::create_directories(dir);
  const fs::path file = dir / "sweep.jsonl";
  write_text(file, "");
  out << std::setprecision(6);
  out << "omega        snr          snr_db    bound_bits\n";
  const std::uint64_t seed = residual_seed(config.training.seed, "sweep", 0, args.sample);
  for (double w : omegas) {
    const Resolution omega(w);
    QuantizerState q{init_residuals(1, seed)[0], omega};
    std::vector<double> trace(ideal.size());
    for (std::size_t t = 0; t < ideal.size(); ++t) trace[t] = q.step(ideal[t]);
    // Unmeasurable when the stream is silent or shorter than the filter warmup.
    std::optional<double> snr;
    try {
      snr = measured_snr(ideal, trace, tau);
    } catch (const NumericalError&) {
    }
    const int bound = static_cast<int>(std::ceil(std::log2(w + 1.0)));
    ordered_json rec;
    rec["run_id"] = config.run_id;
    rec["population"] = args.population;
    rec["omega"] = w;
    rec["tau"] = tau;
    rec["snr"] = snr ? ordered_json(*snr) : ordered_json(nullptr);
    rec["snr_db"] = snr ? ordered_json(10.0 * std::log10(*snr)) : ordered_json(nullptr);
    rec["bound_bits"] = bound;
    rec["trace"] = trace;
    append_line(file, rec.dump());
    out << std::left << std::setw(13) << w;
    if (snr) {
      out << std::setw(13) << *snr << std::setw(10) << 10.0 * std::log10(*snr);
    } else {
      out << std::setw(13) << "n/a" << std::setw(10) << "n/a";
    }
    out << bound << "\n";
  }
  out << "traces written to " << file.string() << "\n";
  return 0;
}

int cmd_report(const ReportArgs& args, std::ostream& out) {
  const fs::path epochs = args.run_dir / "epochs.jsonl";
  const fs::path reports = args.run_dir / "report.jsonl";
  if (!fs::exists(epochs) && !fs::exists(reports)) {
    throw DataError("no epochs.jsonl or report.jsonl in " + args.run_dir.string());
  }
  auto read_lines = [](const fs::path& p) {
    std::vector<nlohmann::json> rows;
    std::ifstream f(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        rows.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(p.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    return rows;
  };
  out << std::setprecision(6);
  if (fs::exists(epochs)) {
    const auto rows = read_lines(epochs);
    out << "epochs " << rows.size() << "\n";
    const nlohmann::json* best = nullptr;
    for (const auto& r : rows) {
      if (r.value("improved", false)) best = &r;
    }
    if (!rows.empty()) {
      const auto& last = rows.back();
      out << "last epoch " << last["epoch"] << ": omega_hidden " << last["omega_hidden"]
          << ", omega_memory " << last["omega_memory"] << ", val_accuracy "
          << last["val_accuracy"] << "\n";
    }
    if (best) {
      out << "best epoch " << (*best)["epoch"] << ": val_loss " << (*best)["val_loss"]
          << ", val_accuracy " << (*best)["val_accuracy"] << "\n";
    }
  }
  if (fs::exists(reports)) {
    for (const auto& r : read_lines(reports)) {
      out << r.value("checkpoint", "?") << " " << r.value("split", "?") << " ("
          << r.value("mode", "?") << "): accuracy " << r.value("accuracy", 0.0) << ", bit-width "
          << r.value("bitwidth_average", 0.0) << ", significant bits "
          << r.value("significant_bits", 0.0) << ", hidden spikes "
          << r.value("hidden_spike_fraction", 0.0) << ", memory zeros "
          << r.value("memory_zero_fraction", 0.0) << "\n";
    }
  }
  return 0;
}

namespace {

struct Archive {
  const char* name;
  const char* md5;
};

constexpr Archive kArchives[] = {
    {"train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"},
    {"train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"},
    {"t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"},
    {"t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"},
};

std::string md5_hex(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr);
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(f.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::size_t write_to_file(char* data, std::size_t size, std::size_t n, void* user) {
  auto* f = static_cast<std::FILE*>(user);
  return std::fwrite(data, size, n, f) * size;
}

// Returns an empty string on success, otherwise the transfer error.
std::string download(const std::string& url, const fs::path& dest) {
  std::FILE* f = std::fopen(dest.string().c_str(), "wb");
  if (!f) throw DataError("cannot write " + dest.string());
  CURL* curl = curl_easy_init();
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_to_file);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, f);
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 20L);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  std::fclose(f);
  return rc == CURLE_OK ? std::string() : std::string(curl_easy_strerror(rc));
}

std::vector<std::string> mirrors() {
  std::string spec = "https://ossci-datasets.s3.amazonaws.com/mnist/,http://yann.lecun.com/exdb/mnist/";
  if (const char* v = std::getenv(std::string(kMirrorEnv).c_str()); v && *v) spec = v;
  std::vector<std::string> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item.back() != '/') item += '/';
    out.push_back(item);
  }
  return out;
}

}  // namespace

int cmd_fetch_data(const FetchArgs& args, std::ostream& out) {
  fs::create_directories(args.out);
  curl_global_init(CURL_GLOBAL_DEFAULT);
  std::vector<fs::path> fetched;
  auto discard = [&] {
    for (const auto& p : fetched) fs::remove(p);
  };
  for (const auto& a : kArchives) {
    const fs::path dest = args.out / a.name;
    if (fs::exists(dest) && md5_hex(dest) == a.md5) {
      out << a.name << ": present, digest ok\n";
      continue;
    }
    fs::path part = dest;
    part += ".part";
    std::string errors;
    bool ok = false;
    for (const auto& base : mirrors()) {
      const std::string err = download(base + a.name, part);
      if (err.empty()) {
        ok = true;
        break;
      }
      errors += "\n  " + base + a.name + ": " + err;
    }
    if (!ok) {
      fs::remove(part);
      discard();
      throw DataError(std::string("could not download ") + a.name + errors +
                      "\nDownload the four MNIST archives manually and place them in " +
                      args.out.string());
    }
    const std::string digest = md5_hex(part);
    if (digest != a.md5) {
      fs::remove(part);
      discard();
      throw DataError(std::string("digest mismatch for ") + a.name + ": expected " + a.md5 +
                      ", got " + digest + " (partial files deleted)");
    }
    fs::rename(part, dest);
    fetched.push_back(dest);
    out << a.name << ": downloaded, digest ok\n";
  }
  const auto files = dataset_files(args.out);
  const auto train = load_idx_pair(files.train_images, files.train_labels);
  const auto test = load_idx_pair(files.test_images, files.test_labels);
  out << "train " << train.labels.size() << " / test " << test.labels.size() << " images\n";
  return 0;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid-spiking LMU training and evaluation", "hslmu"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", train_args.config, "Run config (INI)")->required();

  EvalArgs eval_args;
  std::string eval_config;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write a metrics report");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", eval_args.split, "Dataset split")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval->add_option("--config", eval_config, "Run config (default: config.ini beside the checkpoint)");
  eval->add_flag("--ideal", eval_args.ideal, "Evaluate without quantizers");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Quantize one input stream across resolutions");
  sweep->add_option("--config", sweep_args.config, "Run config (INI)")->required();
  sweep->add_option("--omegas", sweep_args.omegas, "Comma list, 2^k, 2^k-1 or 'default'")
      ->capture_default_str();
  sweep->add_option("--population", sweep_args.population, "hidden or memory activation")
      ->check(CLI::IsMember({"hidden", "memory"}))
      ->capture_default_str();
  sweep->add_option("--sample", sweep_args.sample, "Training sequence index")->capture_default_str();

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("--run-dir", report_args.run_dir, "Run directory")->required();

  FetchArgs fetch_args;
  auto* fetch = app.add_subcommand("fetch-data", "Download and verify the MNIST archives");
  fetch->add_option("--out", fetch_args.out, "Target directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "hslmu: " << e.what() << "\n" << "run with --help for usage\n";
    return 1;
  }
  if (!eval_config.empty()) eval_args.config = eval_config;

  try {
    if (*train) return cmd_train(train_args, out);
    if (*eval) return cmd_eval(eval_args, out);
    if (*sweep) return cmd_sweep(sweep_args, out);
    if (*report) return cmd_report(report_args, out);
    if (*fetch) return cmd_fetch_data(fetch_args, out);
  } catch (const Error& e) {
    err << "hslmu: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "hslmu: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  }
  return 1;
}

}  // namespace hslmu::cli
