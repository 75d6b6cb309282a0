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

#include "hslmu/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hslmu/error.hpp"

namespace hslmu {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  }
  return out;
}

template <class T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& raw) {
  std::vector<int> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<int>(key, item));
  }
  return out;
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

// One key binding: how to read it into a RunConfig and how to render it.
struct Binding {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T, class Proj>
Binding number(Proj proj) {
  return {[proj](RunConfig& c, const std::string& k, const std::string& v) {
            proj(c) = parse_number<T>(k, v);
          },
          [proj](const RunConfig& c) { return format_number<T>(proj(const_cast<RunConfig&>(c))); }};
}

template <class Proj>
Binding text(Proj proj) {
  return {[proj](RunConfig& c, const std::string&, const std::string& v) { proj(c) = trim(v); },
          [proj](const RunConfig& c) { return proj(const_cast<RunConfig&>(c)); }};
}

Binding activation(ActivationFn CellConfig::*member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) {
            const auto kind = parse_activation_kind(trim(v));
            switch (kind) {
              case ActivationKind::kRelu: c.network.*member = ActivationFn::relu(); break;
              case ActivationKind::kSigmoid: c.network.*member = ActivationFn::sigmoid(); break;
              case ActivationKind::kTanh: c.network.*member = ActivationFn::tanh(); break;
              case ActivationKind::kClip: c.network.*member = ActivationFn::clip(); break;
              case ActivationKind::kLifRate: c.network.*member = ActivationFn::lif_rate(); break;
            }
          },
          [member](const RunConfig& c) { return std::string(to_string((c.network.*member).kind)); }};
}

// Section -> ordered (key, binding) list. Order defines the rendered layout.
using Table = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Binding>>>>;

const Table& table() {
  static const Table t = {
      {"run",
       {
           {"id", text([](RunConfig& c) -> std::string& { return c.run_id; })},
           {"seed",
            number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.training.seed; })},
           {"data_dir", text([](RunConfig& c) -> std::string& { return c.data_dir; })},
           {"output_dir", text([](RunConfig& c) -> std::string& { return c.output_dir; })},
           {"threads", number<int>([](RunConfig& c) -> int& { return c.training.threads; })},
       }},
      {"data",
       {
           {"task", {[](RunConfig& c, const std::string&, const std::string& v) {
                       c.task.task = parse_task(trim(v));
                     },
                     [](const RunConfig& c) { return std::string(to_string(c.task.task)); }}},
           {"file_prefix", text([](RunConfig& c) -> std::string& { return c.file_prefix; })},
           {"perm_seed",
            number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.task.perm_seed; })},
           {"classes", {[](RunConfig& c, const std::string& k, const std::string& v) {
                          c.task.classes = parse_int_list(k, v);
                        },
                        [](const RunConfig& c) { return format_int_list(c.task.classes); }}},
           {"downsample", number<int>([](RunConfig& c) -> int& { return c.task.downsample; })},
           {"train_count",
            number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.task.train_count; })},
           {"val_count",
            number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.task.val_count; })},
           {"test_count",
            number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.task.test_count; })},
       }},
      {"network",
       {
           {"hidden", number<int>([](RunConfig& c) -> int& { return c.network.hidden; })},
           {"order", number<int>([](RunConfig& c) -> int& { return c.network.order; })},
           {"theta", number<double>([](RunConfig& c) -> double& { return c.network.theta_bar; })},
           {"tau_memory",
            number<double>([](RunConfig& c) -> double& { return c.network.tau_memory; })},
           {"tau_hidden",
            number<double>([](RunConfig& c) -> double& { return c.network.tau_hidden; })},
           {"tau_output",
            number<double>([](RunConfig& c) -> double& { return c.network.tau_output; })},
           {"hidden_activation", activation(&CellConfig::hidden_fn)},
           {"memory_activation", activation(&CellConfig::memory_fn)},
       }},
      {"schedule",
       {
           {"hidden_high",
            number<double>([](RunConfig& c) -> double& { return c.training.hidden_omega.high; })},
           {"hidden_low",
            number<double>([](RunConfig& c) -> double& { return c.training.hidden_omega.low; })},
           {"memory_high",
            number<double>([](RunConfig& c) -> double& { return c.training.memory_omega.high; })},
           {"memory_low",
            number<double>([](RunConfig& c) -> double& { return c.training.memory_omega.low; })},
           {"interp_epochs",
            number<int>([](RunConfig& c) -> int& { return c.training.interp_epochs; })},
       }},
      {"training",
       {
           {"max_epochs", number<int>([](RunConfig& c) -> int& { return c.training.max_epochs; })},
           {"patience",
            number<int>([](RunConfig& c) -> int& { return c.training.fine_tune_patience; })},
           {"batch_size",
            number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.training.batch_size; })},
           {"chunk_size",
            number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.training.chunk_size; })},
           {"learning_rate",
            number<double>([](RunConfig& c) -> double& { return c.training.adam.learning_rate; })},
           {"beta1", number<double>([](RunConfig& c) -> double& { return c.training.adam.beta1; })},
           {"beta2", number<double>([](RunConfig& c) -> double& { return c.training.adam.beta2; })},
           {"epsilon",
            number<double>([](RunConfig& c) -> double& { return c.training.adam.epsilon; })},
           {"l2", number<double>([](RunConfig& c) -> double& { return c.training.l2; })},
           {"clip_norm", number<double>([](RunConfig& c) -> double& { return c.training.clip_norm; })},
       }},
  };
  return t;
}

const Binding* find_binding(const std::string& section, const std::string& key) {
  for (const auto& [name, keys] : table()) {
    if (name != section) continue;
    for (const auto& [k, b] : keys) {
      if (k == key) return &b;
    }
  }
  return nullptr;
}

}  // namespace

RunConfig parse_config(std::string_view text_in) {
  pt::ptree tree;
  std::istringstream in{std::string(text_in)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  RunConfig c;
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty()) {
      throw ConfigError("config key '" + section + "' must live inside a section");
    }
    for (const auto& [key, value] : keys) {
      const Binding* b = find_binding(section, key);
      if (!b) throw ConfigError("unknown config key '" + section + "." + key + "'");
      b->set(c, section + "." + key, value.data());
    }
  }
  c.training.validate();
  if (c.task.downsample < 1) throw ConfigError("data.downsample must be >= 1");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const auto& [section, keys] : table()) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& [key, b] : keys) out += key + " = " + b.get(config) + "\n";
  }
  return out;
}

void apply_env_overrides(RunConfig& config) {
  if (const char* v = std::getenv(std::string(kDataDirEnv).c_str()); v && *v) config.data_dir = v;
  if (const char* v = std::getenv(std::string(kOutputDirEnv).c_str()); v && *v) {
    config.output_dir = v;
  }
}

CellConfig resolve_network(const RunConfig& config, int steps, int classes) {
  CellConfig c = config.network;
  c.input_dim = 1;
  c.classes = classes;
  if (!(c.theta_bar > 0.0)) c.theta_bar = steps;
  c.validate();
  return c;
}

std::filesystem::path run_directory(const RunConfig& config) {
  return std::filesystem::path(config.output_dir) / config.run_id;
}

DatasetFiles dataset_files(const std::filesystem::path& dir, std::string_view prefix) {
  const std::string p(prefix);
  return {dir / (p + "train-images-idx3-ubyte.gz"), dir / (p + "train-labels-idx1-ubyte.gz"),
          dir / (p + "t10k-images-idx3-ubyte.gz"), dir / (p + "t10k-labels-idx1-ubyte.gz")};
}

SequenceDataset load_dataset(const RunConfig& config) {
  const auto files = dataset_files(config.data_dir, config.file_prefix);
  const RawMnist train = load_idx_pair(files.train_images, files.train_labels);
  const RawMnist test = load_idx_pair(files.test_images, files.test_labels);
  return make_task(train, test, config.task);
}

}  // namespace hslmu
