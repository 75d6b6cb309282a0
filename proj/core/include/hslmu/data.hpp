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

// MNIST ingestion and the sequential / permuted-sequential tasks.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hslmu {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct ImageSet {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image

  std::size_t count() const { return rows * cols == 0 ? 0 : pixels.size() / (rows * cols); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span(pixels).subspan(i * rows * cols, rows * cols);
  }
  bool operator==(const ImageSet&) const = default;
};

using LabelSet = std::vector<std::uint8_t>;

// Big-endian IDX containers. Errors (bad magic, truncated payload, trailing
// bytes, label > 9) raise DataError naming the byte offset.
ImageSet parse_idx_images(std::span<const std::uint8_t> bytes);
LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx_images(const ImageSet& images);
std::vector<std::uint8_t> serialize_idx_labels(const LabelSet& labels);

// Whole file, transparently gunzipped when compressed.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// 2 * pixel / 255 - 1, in [-1, 1].
inline double normalize_pixel(std::uint8_t pixel) { return 2.0 * pixel / 255.0 - 1.0; }

// 2x2 (or f x f) block average with round-half-up. rows/cols must divide.
ImageSet downsample(const ImageSet& images, int factor);

// Seeded Fisher-Yates permutation of {0, ..., size - 1}.
std::vector<int> make_permutation(int size, std::uint64_t seed);

enum class Task { kSequential, kPermuted };
std::string_view to_string(Task task);
Task parse_task(std::string_view name);  // "smnist" | "psmnist"

struct TaskSpec {
  Task task = Task::kSequential;
  std::uint64_t perm_seed = 0;
  std::vector<int> classes;  // empty keeps all digits; labels become indices into the sorted list
  int downsample = 1;
  // train = first train_count of the training file, validation = its last
  // val_count, test = first test_count of the test file (0 = all remaining).
  std::size_t train_count = 50000;
  std::size_t val_count = 10000;
  std::size_t test_count = 10000;

  bool operator==(const TaskSpec&) const = default;
};

// One split of a sequence task; pixels are stored as bytes and normalized
// on gather.
class SequenceSplit {
 public:
  SequenceSplit() = default;
  SequenceSplit(int steps, std::vector<std::uint8_t> pixels, std::vector<int> labels,
                std::vector<std::size_t> source_index);

  int steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  // Position of each sequence in its source IDX file.
  const std::vector<std::size_t>& source_index() const noexcept { return source_; }

  double value(std::size_t sequence, int step) const {
    return normalize_pixel(pixels_[sequence * static_cast<std::size_t>(steps_) +
                                   static_cast<std::size_t>(step)]);
  }
  std::span<const std::uint8_t> raw(std::size_t sequence) const {
    return std::span(pixels_).subspan(sequence * static_cast<std::size_t>(steps_),
                                      static_cast<std::size_t>(steps_));
  }

  // steps x rows.size() matrix; column j is sequence rows[j].
  Eigen::MatrixXd gather(std::span<const std::size_t> rows) const;

 private:
  int steps_ = 0;
  std::vector<std::uint8_t> pixels_;
  std::vector<int> labels_;
  std::vector<std::size_t> source_;
};

struct SequenceDataset {
  int steps = 0;
  std::vector<int> permutation;  // empty for the unpermuted task
  std::vector<int> digits;       // digit of each class index, ascending
  SequenceSplit train;
  SequenceSplit validation;
  SequenceSplit test;

  const SequenceSplit& split(std::string_view name) const;  // train|val|test
  int classes() const { return static_cast<int>(digits.size()); }
};

struct RawMnist {
  ImageSet images;
  LabelSet labels;
};

// Reads an images/labels pair (plain or gzipped) and checks the counts agree.
RawMnist load_idx_pair(const std::filesystem::path& images,
                       const std::filesystem::path& labels);

// Flattens row-major, optionally downsampled and permuted, and splits.
SequenceDataset make_task(const RawMnist& train_file, const RawMnist& test_file,
                          const TaskSpec& spec);

// Shuffled minibatches covering [0, count) exactly once; the last batch may
// be short. Deterministic in (seed, epoch).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, int epoch);

}  // namespace hslmu
