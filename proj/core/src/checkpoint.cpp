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

#include "hslmu/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "hslmu/error.hpp"

namespace hslmu {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'L', 'M', 'U', 'C', 'K', 'P'};
constexpr std::uint8_t kDtypeF32 = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  const auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

void put_name(std::vector<std::uint8_t>& out, const std::string& name) {
  if (name.empty() || name.size() > 0xffff) throw ConfigError("checkpoint: bad entry name");
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string name(const char* what) {
    const auto len = get<std::uint16_t>(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError("checkpoint truncated reading " + std::string(what) + " at byte offset " +
                      std::to_string(pos_));
    }
  }

  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> shape_of(const ConstTensorRef& t) {
  if (t.cols == 1 && t.name.find("weights") == std::string_view::npos) {
    return {static_cast<std::uint32_t>(t.rows)};
  }
  return {static_cast<std::uint32_t>(t.rows), static_cast<std::uint32_t>(t.cols)};
}

std::size_t element_count(const std::vector<std::uint32_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void append_tensors(Checkpoint& ck, const Parameters& p, const std::string& prefix) {
  for (const auto& t : p.tensors()) {
    TensorBlob blob{prefix + std::string(t.name), shape_of(t), {}};
    blob.values.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) blob.values.push_back(static_cast<float>(t.data[i]));
    ck.tensors.push_back(std::move(blob));
  }
}

void copy_tensors(const Checkpoint& ck, Parameters& p, const std::string& prefix) {
  for (auto& t : p.tensors()) {
    const std::string name = prefix + std::string(t.name);
    const TensorBlob* blob = ck.find(name);
    if (!blob) throw DataError("checkpoint is missing tensor '" + name + "'");
    const auto expected = shape_of(ConstTensorRef{t.name, t.data, t.rows, t.cols});
    if (blob->shape != expected) {
      auto fmt = [](const std::vector<std::uint32_t>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
        return out + "]";
      };
      throw DataError("checkpoint tensor '" + name + "' has shape " + fmt(blob->shape) +
                      " but the configuration expects " + fmt(expected));
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = blob->values[static_cast<std::size_t>(i)];
  }
}

}  // namespace

const TensorBlob* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::optional<std::int64_t> Checkpoint::counter(std::string_view name) const {
  for (const auto& [k, v] : counters) {
    if (k == name) return v;
  }
  return std::nullopt;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  std::set<std::string> seen;
  for (const auto& t : ck.tensors) {
    if (!seen.insert(t.name).second) throw ConfigError("checkpoint: duplicate tensor '" + t.name + "'");
    if (t.shape.size() > 255 || element_count(t.shape) != t.values.size()) {
      throw ConfigError("checkpoint: tensor '" + t.name + "' shape does not match its values");
    }
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.counters.size()));
  for (const auto& [name, value] : ck.counters) {
    put_name(out, name);
    put<std::int64_t>(out, value);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    put_name(out, t.name);
    out.push_back(kDtypeF32);
    out.push_back(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint32_t>(out, d);
  }
  for (const auto& t : ck.tensors) {
    for (float v : t.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  const auto crc = crc32(0L, out.data(), static_cast<uInt>(out.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(crc));
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic at byte offset 0)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  const auto stored = tail.get<std::uint32_t>("digest");
  const auto actual = static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size())));
  if (stored != actual) throw DataError("checkpoint integrity digest mismatch (file is corrupted)");

  Reader r(body);
  r.need(sizeof(kMagic), "magic");
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<std::uint8_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto n_counters = r.get<std::uint32_t>("counter count");
  for (std::uint32_t i = 0; i < n_counters; ++i) {
    auto name = r.name("counter name");
    ck.counters.emplace_back(std::move(name), r.get<std::int64_t>("counter value"));
  }
  const auto n_tensors = r.get<std::uint32_t>("tensor count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    TensorBlob t;
    const std::size_t at = r.pos();
    t.name = r.name("tensor name");
    if (!seen.insert(t.name).second) {
      throw DataError("checkpoint manifest repeats '" + t.name + "' at byte offset " + std::to_string(at));
    }
    if (r.get<std::uint8_t>("dtype") != kDtypeF32) {
      throw DataError("checkpoint tensor '" + t.name + "' has an unsupported element type");
    }
    const auto rank = r.get<std::uint8_t>("rank");
    for (int k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint32_t>("dims"));
    ck.tensors.push_back(std::move(t));
  }
  for (auto& t : ck.tensors) {
    const std::size_t n = element_count(t.shape);
    r.need(n * 4, "payload");
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<float>(r.get<std::uint32_t>("payload"));
  }
  if (r.pos() != body.size()) {
    throw DataError("checkpoint has trailing bytes at byte offset " + std::to_string(r.pos()));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

Checkpoint make_checkpoint(const Parameters& params, const AdamState* optimizer, int epoch) {
  Checkpoint ck;
  ck.counters.emplace_back("schedule.epoch", epoch);
  ck.counters.emplace_back("adam.step", optimizer ? optimizer->step : 0);
  append_tensors(ck, params, "");
  if (optimizer) {
    append_tensors(ck, optimizer->first, "adam.first/");
    append_tensors(ck, optimizer->second, "adam.second/");
  }
  return ck;
}

void restore_parameters(const Checkpoint& checkpoint, Parameters& params) {
  copy_tensors(checkpoint, params, "");
}

std::optional<AdamState> restore_optimizer(const Checkpoint& checkpoint, const CellConfig& config) {
  if (!checkpoint.find("adam.first/cell.input_weights")) return std::nullopt;
  AdamState s = AdamState::zeros(config);
  copy_tensors(checkpoint, s.first, "adam.first/");
  copy_tensors(checkpoint, s.second, "adam.second/");
  s.step = checkpoint.counter("adam.step").value_or(0);
  return s;
}

}  // namespace hslmu
