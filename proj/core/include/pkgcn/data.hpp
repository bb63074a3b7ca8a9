#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "pkgcn/tensor.hpp"

namespace pkgcn {

/// Images [N x C x H x W] scaled to [0, 1] by p / 255, labels in [0, m).
template <typename T>
struct LabeledDataset {
  Tensor<T> images;
  std::vector<std::int32_t> labels;
  std::size_t num_classes = 10;

  std::size_t size() const noexcept { return labels.size(); }
  /// Example indices grouped by class, each list ascending.
  std::vector<std::vector<std::size_t>> class_indices() const;
};

/// IDX files, big-endian: images magic 0x00000803 + count, rows, cols;
/// labels magic 0x00000801 + count. Throws FormatError on bad magic,
/// truncated payloads or mismatched counts, IoError if unreadable.
template <typename T>
LabeledDataset<T> load_mnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

template <typename T>
LabeledDataset<T> parse_mnist(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);

/// CIFAR-10 binary batches: 3073-byte records (label, then 1024 bytes each of R, G, B).
template <typename T>
LabeledDataset<T> load_cifar10(std::span<const std::filesystem::path> batch_paths);

template <typename T>
LabeledDataset<T> parse_cifar10(std::span<const std::uint8_t> bytes);

template <typename T>
LabeledDataset<T> subset(const LabeledDataset<T>& data, std::span<const std::size_t> indices);

template <typename T>
struct Split {
  LabeledDataset<T> train;
  LabeledDataset<T> validation;
  std::vector<std::size_t> train_indices;       // into the source dataset
  std::vector<std::size_t> validation_indices;
};

/// Exactly train_size/m and val_size/m examples per class, disjoint, from a
/// seeded shuffle of each class's indices. Throws ConfigError when the sizes
/// are not divisible by m or a class is too small.
template <typename T>
Split<T> stratified_split(const LabeledDataset<T>& data, std::size_t train_size, std::size_t val_size,
                          std::uint64_t seed);

/// Seeded permutation of [0, n) cut into batches of `batch_size`; the last
/// batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed);

/// Gathers the given examples into an image tensor and a label vector.
template <typename T>
std::pair<Tensor<T>, std::vector<std::int32_t>> gather(const LabeledDataset<T>& data,
                                                       std::span<const std::size_t> indices);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace pkgcn
