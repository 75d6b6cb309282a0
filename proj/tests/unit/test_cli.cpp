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

#include <algorithm>
#include <cmath>
#include <map>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <zlib.h>

#include "commands.hpp"
#include "hslmu/checkpoint.hpp"
#include "hslmu/config.hpp"
#include "hslmu/error.hpp"
#include "synthetic.hpp"

namespace hslmu {
namespace {

namespace fs = std::filesystem;

void write_gz(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  gzFile f = gzopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> json_lines(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream f(p);
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hslmu");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / "hslmu_cli_test");
    fs::remove_all(*root_);
    fs::create_directories(*root_ / "data");
    const std::vector<int> digits{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto train = testing::synthetic_raw(120, 1, 5, digits);
    const auto test = testing::synthetic_raw(100, 2, 5, digits);
    const auto files = dataset_files(*root_ / "data", "syn-");
    write_gz(files.train_images, serialize_idx_images(train.images));
    write_gz(files.train_labels, serialize_idx_labels(train.labels));
    write_gz(files.test_images, serialize_idx_images(test.images));
    write_gz(files.test_labels, serialize_idx_labels(test.labels));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }

  static RunConfig base_config(const std::string& id) {
    RunConfig c;
    c.run_id = id;
    c.data_dir = (*root_ / "data").string();
    c.output_dir = (*root_ / "runs").string();
    c.file_prefix = "syn-";
    c.task.train_count = 80;
    c.task.val_count = 40;
    c.task.test_count = 100;
    c.network.hidden = 12;
    c.network.order = 4;
    c.network.theta_bar = 0.0;
    c.training.interp_epochs = 2;
    c.training.max_epochs = 3;
    c.training.fine_tune_patience = 1;
    c.training.batch_size = 20;
    c.training.adam.learning_rate = 0.01;
    c.training.seed = 3;
    return c;
  }

  static fs::path write_config(const RunConfig& c, const std::string& name) {
    const auto p = *root_ / name;
    std::ofstream(p) << render_config(c);
    return p;
  }

  static inline fs::path* root_ = nullptr;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"train"}).code, 1);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", "x", "--split", "dev"}).code, 1);
  const auto help = run_cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("fetch-data"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyIsUsageError) {
  const auto p = *root_ / "typo.ini";
  std::ofstream(p) << "[training]\nlearning_rte = 0.1\n";
  const auto r = run_cli({"train", "--config", p.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("training.learning_rte"), std::string::npos) << r.err;
}

TEST_F(Cli, InvertedScheduleRejectedBeforeTraining) {
  auto c = base_config("inverted");
  c.training.memory_omega = {2.0, 32.0};
  const auto p = *root_ / "inverted.ini";
  std::ofstream(p) << render_config(c);
  EXPECT_EQ(run_cli({"train", "--config", p.string()}).code, 1);
  EXPECT_FALSE(fs::exists(*root_ / "runs" / "inverted"));
}

TEST_F(Cli, MissingDataIsDataError) {
  auto c = base_config("nodata");
  c.data_dir = (*root_ / "absent").string();
  const auto r = run_cli({"train", "--config", write_config(c, "nodata.ini").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("fetch-data"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainEvalReport) {
  const auto cfg = write_config(base_config("smoke"), "smoke.ini");
  const auto r = run_cli({"train", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dir = *root_ / "runs" / "smoke";
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "config.ini"));
  const auto epochs = json_lines(dir / "epochs.jsonl");
  ASSERT_FALSE(epochs.empty());
  for (const auto& e : epochs) {
    for (const char* key : {"epoch", "omega_hidden", "omega_memory", "train_loss", "val_loss",
                            "val_accuracy"}) {
      EXPECT_TRUE(e.contains(key)) << key;
    }
  }
  EXPECT_EQ(json_lines(dir / "timing.jsonl").size(), epochs.size());

  const auto first_log = slurp(dir / "epochs.jsonl");
  ASSERT_EQ(run_cli({"train", "--config", cfg.string()}).code, 0);
  EXPECT_EQ(slurp(dir / "epochs.jsonl"), first_log);

  const auto ev = run_cli({"eval", "--checkpoint", (dir / "best.ckpt").string(), "--split", "test"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("accuracy"), std::string::npos);
  EXPECT_NE(ev.out.find("state variables 42"), std::string::npos) << ev.out;
  const auto reports = json_lines(dir / "report.jsonl");
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0]["split"], "test");
  EXPECT_EQ(reports[0]["count"], 100);
  EXPECT_EQ(reports[0]["omega_hidden"], 1.0);
  EXPECT_EQ(reports[0]["omega_memory"], 2.0);
  for (const char* key : {"bitwidth_average", "significant_bits", "hidden_spike_fraction",
                          "memory_zero_fraction", "state_variables"}) {
    EXPECT_TRUE(reports[0].contains(key)) << key;
  }

  const auto rep = run_cli({"report", "--run-dir", dir.string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("best epoch"), std::string::npos) << rep.out;
  EXPECT_NE(rep.out.find("best.ckpt test"), std::string::npos) << rep.out;
}

TEST_F(Cli, ZeroOutputCheckpointPicksFirstClass) {
  const auto c = base_config("zero");
  const auto dir = *root_ / "runs" / "zero";
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << render_config(c);
  CellConfig cell = resolve_network(c, 25, 10);
  save_checkpoint(dir / "zero.ckpt", make_checkpoint(Parameters::zeros(cell), nullptr, 0));
  const auto ev = run_cli({"eval", "--checkpoint", (dir / "zero.ckpt").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto reports = json_lines(dir / "report.jsonl");
  EXPECT_DOUBLE_EQ(reports.back()["accuracy"].get<double>(), 0.1);
}

TEST_F(Cli, EvalErrors) {
  const auto c = base_config("evalerr");
  const auto dir = *root_ / "runs" / "evalerr";
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << render_config(c);
  CellConfig wrong = resolve_network(c, 25, 10);
  wrong.hidden += 1;
  save_checkpoint(dir / "wrong.ckpt", make_checkpoint(Parameters::zeros(wrong), nullptr, 0));
  const auto mismatch = run_cli({"eval", "--checkpoint", (dir / "wrong.ckpt").string()});
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.err.find("cell."), std::string::npos) << mismatch.err;

  auto bytes = serialize_checkpoint(make_checkpoint(Parameters::zeros(resolve_network(c, 25, 10)), nullptr, 0));
  bytes[bytes.size() / 2] ^= 0x10;
  std::ofstream(dir / "bad.ckpt", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  EXPECT_EQ(run_cli({"eval", "--checkpoint", (dir / "bad.ckpt").string()}).code, 2);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", (dir / "missing.ckpt").string()}).code, 2);
}

TEST_F(Cli, EnvironmentOverridesOutputDirectory) {
  const auto cfg = write_config(base_config("envrun"), "envrun.ini");
  const auto alt = *root_ / "alt-out";
  ::setenv(std::string(kOutputDirEnv).c_str(), alt.c_str(), 1);
  const auto sweep = run_cli({"sweep", "--config", cfg.string(), "--omegas", "1,3"});
  ::unsetenv(std::string(kOutputDirEnv).c_str());
  ASSERT_EQ(sweep.code, 0) << sweep.err;
  EXPECT_TRUE(fs::exists(alt / "envrun" / "sweep.jsonl"));
}

TEST_F(Cli, SweepTracesAndOrdering) {
  auto c = base_config("sweep");
  c.network.hidden_fn = ActivationFn::clip();
  c.network.tau_hidden = 2.0;  // warmup of 10 steps inside the 25-step sequence
  const auto cfg = write_config(c, "sweep.ini");
  const auto r = run_cli({"sweep", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = json_lines(*root_ / "runs" / "sweep" / "sweep.jsonl");
  ASSERT_EQ(rows.size(), 9u);
  std::map<double, double> snr;
  for (const auto& row : rows) snr[row["omega"].get<double>()] = row["snr"].get<double>();
  EXPECT_GT(snr.at(255.0), snr.at(15.0));
  EXPECT_GT(snr.at(15.0), snr.at(1.0));

  // Recompute the ideal stream from the data to check the trace endpoints.
  auto loaded = c;
  const auto data = load_dataset(loaded);
  for (const auto& row : rows) {
    const auto trace = row["trace"].get<std::vector<double>>();
    ASSERT_EQ(trace.size(), 25u);
    const double w = row["omega"].get<double>();
    for (int t = 0; t < 25; ++t) {
      const double ideal = std::clamp(data.train.value(0, t), -1.0, 1.0);
      if (w == 1.0) {
        EXPECT_TRUE(trace[t] == -1.0 || trace[t] == 0.0 || trace[t] == 1.0);
      }
      if (w == 4294967296.0) {
        EXPECT_LE(std::abs(trace[t] - ideal), std::ldexp(1.0, -31));
      }
    }
  }
}

TEST_F(Cli, SweepRejectsBadList) {
  const auto cfg = write_config(base_config("badlist"), "badlist.ini");
  EXPECT_EQ(run_cli({"sweep", "--config", cfg.string(), "--omegas", "3,x"}).code, 1);
  EXPECT_EQ(run_cli({"sweep", "--config", cfg.string(), "--omegas", "0"}).code, 1);
}

TEST(OmegaList, Forms) {
  EXPECT_EQ(cli::parse_omega_list("1, 2^4, 2^3-1, 0.5"), (std::vector<double>{1, 16, 7, 0.5}));
  const auto d = cli::parse_omega_list("default");
  ASSERT_EQ(d.size(), 9u);
  EXPECT_EQ(d.front(), 1.0);
  EXPECT_EQ(d[7], 255.0);
  EXPECT_EQ(d.back(), 4294967296.0);
  EXPECT_THROW(cli::parse_omega_list(""), ConfigError);
  EXPECT_THROW(cli::parse_omega_list("2^4+1"), ConfigError);
}

TEST_F(Cli, FetchOfflineExplainsManualPlacement) {
  const auto out = *root_ / "fetch-offline";
  ::setenv(std::string(cli::kMirrorEnv).c_str(), "file:///nonexistent/mirror/", 1);
  const auto r = run_cli({"fetch-data", "--out", out.string()});
  ::unsetenv(std::string(cli::kMirrorEnv).c_str());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("manually"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::is_empty(out));
}

TEST_F(Cli, FetchDigestMismatchDeletesPartialFiles) {
  const auto mirror = *root_ / "fake-mirror";
  fs::create_directories(mirror);
  std::ofstream(mirror / "train-images-idx3-ubyte.gz") << "not the real archive";
  const auto out = *root_ / "fetch-corrupt";
  ::setenv(std::string(cli::kMirrorEnv).c_str(), ("file://" + mirror.string()).c_str(), 1);
  const auto r = run_cli({"fetch-data", "--out", out.string()});
  ::unsetenv(std::string(cli::kMirrorEnv).c_str());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("digest mismatch"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::is_empty(out));
}

}  // namespace
}  // namespace hslmu
