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

#include "hslmu/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>

#include "hslmu/error.hpp"
#include "hslmu/rng.hpp"

namespace hslmu {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* what) {
  if (offset + 4 > bytes.size()) {
    throw DataError(std::string("IDX ") + what + ": truncated header at byte offset " +
                    std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const char* what) {
  if (magic != expected) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "IDX %s: bad magic 0x%08x at byte offset 0 (expected 0x%08x)",
                  what, magic, expected);
    throw DataError(buf);
  }
}

void check_payload(std::size_t header, std::size_t expected, std::size_t actual,
                   const char* what) {
  if (actual < header + expected) {
    throw DataError(std::string("IDX ") + what + ": payload truncated at byte offset " +
                    std::to_string(actual) + ", header promises " +
                    std::to_string(header + expected) + " bytes");
  }
  if (actual > header + expected) {
    throw DataError(std::string("IDX ") + what + ": unexpected trailing data at byte offset " +
                    std::to_string(header + expected));
  }
}

}  // namespace

ImageSet parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(read_be32(bytes, 0, "images"), kIdxImagesMagic, "images");
  const std::size_t count = read_be32(bytes, 4, "images");
  ImageSet set;
  set.rows = read_be32(bytes, 8, "images");
  set.cols = read_be32(bytes, 12, "images");
  const std::size_t payload = count * set.rows * set.cols;
  check_payload(16, payload, bytes.size(), "images");
  set.pixels.assign(bytes.begin() + 16, bytes.end());
  return set;
}

LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(read_be32(bytes, 0, "labels"), kIdxLabelsMagic, "labels");
  const std::size_t count = read_be32(bytes, 4, "labels");
  check_payload(8, count, bytes.size(), "labels");
  LabelSet labels(bytes.begin() + 8, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw DataError("IDX labels: label " + std::to_string(labels[i]) +
                      " out of range at byte offset " + std::to_string(8 + i));
    }
  }
  return labels;
}

std::vector<std::uint8_t> serialize_idx_images(const ImageSet& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count()));
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(const LabelSet& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.c_str(), "rb"), &gzclose);
  if (!file) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(file.get(), buf, sizeof buf);
    if (n < 0) throw DataError("read error (corrupt gzip?) in " + path.string());
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  return out;
}

ImageSet downsample(const ImageSet& images, int factor) {
  if (factor == 1) return images;
  const auto f = static_cast<std::uint32_t>(factor);
  if (factor < 1 || images.rows % f != 0 || images.cols % f != 0) {
    throw ConfigError("downsample factor must divide the image size");
  }
  ImageSet out;
  out.rows = images.rows / f;
  out.cols = images.cols / f;
  out.pixels.reserve(images.count() * out.rows * out.cols);
  const std::uint32_t area = f * f;
  for (std::size_t i = 0; i < images.count(); ++i) {
    const auto img = images.image(i);
    for (std::uint32_t r = 0; r < out.rows; ++r) {
      for (std::uint32_t c = 0; c < out.cols; ++c) {
        std::uint32_t sum = 0;
        for (std::uint32_t dr = 0; dr < f; ++dr) {
          for (std::uint32_t dc = 0; dc < f; ++dc) {
            sum += img[(r * f + dr) * images.cols + c * f + dc];
          }
        }
        out.pixels.push_back(static_cast<std::uint8_t>((sum + area / 2) / area));
      }
    }
  }
  return out;
}

std::vector<int> make_permutation(int size, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(size));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, streams::kPermutation);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::string_view to_string(Task task) {
  return task == Task::kSequential ? "smnist" : "psmnist";
}

Task parse_task(std::string_view name) {
  if (name == "smnist") return Task::kSequential;
  if (name == "psmnist") return Task::kPermuted;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected smnist or psmnist)");
}

SequenceSplit::SequenceSplit(int steps, std::vector<std::uint8_t> pixels,
                             std::vector<int> labels, std::vector<std::size_t> source_index)
    : steps_(steps),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      source_(std::move(source_index)) {}

Eigen::MatrixXd SequenceSplit::gather(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd out(steps_, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] >= size()) throw ConfigError("sequence index out of range");
    for (int t = 0; t < steps_; ++t) out(t, static_cast<Eigen::Index>(j)) = value(rows[j], t);
  }
  return out;
}

const SequenceSplit& SequenceDataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return validation;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

RawMnist load_idx_pair(const std::filesystem::path& images,
                       const std::filesystem::path& labels) {
  if (!std::filesystem::exists(images) || !std::filesystem::exists(labels)) {
    throw DataError("dataset files not found: " + images.string() + ", " + labels.string() +
                    " (run `hslmu fetch-data --out DIR` or place the IDX files there)");
  }
  RawMnist raw{parse_idx_images(read_file_bytes(images)),
               parse_idx_labels(read_file_bytes(labels))};
  if (raw.images.count() != raw.labels.size()) {
    throw DataError("image count " + std::to_string(raw.images.count()) +
                    " does not match label count " + std::to_string(raw.labels.size()));
  }
  return raw;
}

namespace {

// Indices (into the file) of the images whose label is kept.
std::vector<std::size_t> kept_indices(const RawMnist& raw, const std::vector<int>& classes) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < raw.labels.size(); ++i) {
    if (classes.empty() ||
        std::find(classes.begin(), classes.end(), raw.labels[i]) != classes.end()) {
      keep.push_back(i);
    }
  }
  return keep;
}

SequenceSplit build_split(const ImageSet& images, const LabelSet& labels,
                          std::span<const std::size_t> indices, const std::vector<int>& perm,
                          const std::vector<int>& digits) {
  const int steps = static_cast<int>(images.rows * images.cols);
  std::vector<std::uint8_t> pixels;
  pixels.reserve(indices.size() * static_cast<std::size_t>(steps));
  std::vector<int> out_labels;
  std::vector<std::size_t> source;
  for (std::size_t i : indices) {
    const auto img = images.image(i);
    for (int t = 0; t < steps; ++t) {
      pixels.push_back(perm.empty() ? img[static_cast<std::size_t>(t)]
                                    : img[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])]);
    }
    out_labels.push_back(static_cast<int>(
        std::find(digits.begin(), digits.end(), labels[i]) - digits.begin()));
    source.push_back(i);
  }
  return SequenceSplit(steps, std::move(pixels), std::move(out_labels), std::move(source));
}

}  // namespace

SequenceDataset make_task(const RawMnist& train_file, const RawMnist& test_file,
                          const TaskSpec& spec) {
  const ImageSet train_images = downsample(train_file.images, spec.downsample);
  const ImageSet test_images = downsample(test_file.images, spec.downsample);
  if (train_images.rows != test_images.rows || train_images.cols != test_images.cols) {
    throw DataError("training and test images differ in size");
  }
  SequenceDataset ds;
  if (spec.classes.empty()) {
    ds.digits.resize(10);
    std::iota(ds.digits.begin(), ds.digits.end(), 0);
  } else {
    ds.digits = spec.classes;
    std::sort(ds.digits.begin(), ds.digits.end());
    if (std::adjacent_find(ds.digits.begin(), ds.digits.end()) != ds.digits.end() ||
        ds.digits.front() < 0 || ds.digits.back() > 9) {
      throw ConfigError("data.classes must be distinct digits 0-9");
    }
  }
  ds.steps = static_cast<int>(train_images.rows * train_images.cols);
  if (spec.task == Task::kPermuted) ds.permutation = make_permutation(ds.steps, spec.perm_seed);

  const auto train_keep = kept_indices(train_file, spec.classes);
  const auto test_keep = kept_indices(test_file, spec.classes);
  const std::size_t n_val = spec.val_count;
  if (n_val > train_keep.size()) throw DataError("validation split larger than the training file");
  const std::size_t n_train =
      spec.train_count == 0 ? train_keep.size() - n_val : spec.train_count;
  if (n_train + n_val > train_keep.size()) {
    throw DataError("train + validation splits (" + std::to_string(n_train + n_val) +
                    ") exceed the " + std::to_string(train_keep.size()) +
                    " usable training images");
  }
  const std::size_t n_test = spec.test_count == 0 ? test_keep.size() : spec.test_count;
  if (n_test > test_keep.size()) {
    throw DataError("test split (" + std::to_string(n_test) + ") exceeds the " +
                    std::to_string(test_keep.size()) + " usable test images");
  }

  const std::span<const std::size_t> tk(train_keep);
  ds.train = build_split(train_images, train_file.labels, tk.first(n_train), ds.permutation,
                         ds.digits);
  ds.validation = build_split(train_images, train_file.labels, tk.last(n_val), ds.permutation,
                              ds.digits);
  ds.test = build_split(test_images, test_file.labels,
                        std::span<const std::size_t>(test_keep).first(n_test), ds.permutation,
                        ds.digits);
  return ds;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, int epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, streams::kShuffle, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_below(rng, i))]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace hslmu
