#include "pkgcn/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "pkgcn/errors.hpp"

namespace pkgcn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError("idx: truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return bytes;
}

template <typename T>
std::vector<std::vector<std::size_t>> LabeledDataset<T>::class_indices() const {
  std::vector<std::vector<std::size_t>> out(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

template <typename T>
LabeledDataset<T> parse_mnist(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes) {
  if (read_be32(image_bytes, 0) != kImageMagic) throw FormatError("idx images: bad magic number");
  if (read_be32(label_bytes, 0) != kLabelMagic) throw FormatError("idx labels: bad magic number");
  const std::size_t count = read_be32(image_bytes, 4);
  const std::size_t rows = read_be32(image_bytes, 8);
  const std::size_t cols = read_be32(image_bytes, 12);
  const std::size_t label_count = read_be32(label_bytes, 4);
  if (count != label_count) {
    throw FormatError("idx: " + std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) throw FormatError("idx: empty image file");
  const std::size_t pixels = count * rows * cols;
  if (image_bytes.size() < 16 + pixels) throw FormatError("idx images: truncated payload");
  if (label_bytes.size() < 8 + count) throw FormatError("idx labels: truncated payload");

  LabeledDataset<T> ds;
  ds.num_classes = 10;
  ds.images = Tensor<T>({count, 1, rows, cols});
  for (std::size_t i = 0; i < pixels; ++i) ds.images[i] = static_cast<T>(image_bytes[16 + i]) / T(255);
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto y = label_bytes[8 + i];
    if (y >= ds.num_classes) throw FormatError("idx labels: label " + std::to_string(y) + " out of range");
    ds.labels[i] = y;
  }
  return ds;
}

template <typename T>
LabeledDataset<T> load_mnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  const auto images = read_file_bytes(image_path);
  const auto labels = read_file_bytes(label_path);
  return parse_mnist<T>(images, labels);
}

template <typename T>
LabeledDataset<T> parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw FormatError("cifar10: length " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  }
  const std::size_t count = bytes.size() / kCifarRecord;
  LabeledDataset<T> ds;
  ds.num_classes = 10;
  ds.images = Tensor<T>({count, 3, 32, 32});
  ds.labels.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] >= 10) throw FormatError("cifar10: label " + std::to_string(rec[0]) + " out of range");
    ds.labels[r] = rec[0];
    T* dst = ds.images.data().data() + r * 3072;
    for (std::size_t k = 0; k < 3072; ++k) dst[k] = static_cast<T>(rec[1 + k]) / T(255);
  }
  return ds;
}

template <typename T>
LabeledDataset<T> load_cifar10(std::span<const std::filesystem::path> batch_paths) {
  std::vector<std::uint8_t> all;
  for (const auto& p : batch_paths) {
    auto bytes = read_file_bytes(p);
    if (bytes.size() % kCifarRecord != 0) {
      throw FormatError("cifar10: " + p.string() + " length is not a multiple of 3073");
    }
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return parse_cifar10<T>(all);
}

template <typename T>
std::pair<Tensor<T>, std::vector<std::int32_t>> gather(const LabeledDataset<T>& data,
                                                       std::span<const std::size_t> indices) {
  Shape shape = data.images.shape();
  const std::size_t stride = data.images.size() / shape[0];
  shape[0] = indices.size();
  Tensor<T> images(shape);
  std::vector<std::int32_t> labels(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= data.size()) throw InputError("gather: index " + std::to_string(i) + " out of range");
    std::copy_n(data.images.data().data() + i * stride, stride, images.data().data() + k * stride);
    labels[k] = data.labels[i];
  }
  return {std::move(images), std::move(labels)};
}

template <typename T>
LabeledDataset<T> subset(const LabeledDataset<T>& data, std::span<const std::size_t> indices) {
  auto [images, labels] = gather(data, indices);
  return {std::move(images), std::move(labels), data.num_classes};
}

template <typename T>
Split<T> stratified_split(const LabeledDataset<T>& data, std::size_t train_size, std::size_t val_size,
                          std::uint64_t seed) {
  const std::size_t m = data.num_classes;
  if (train_size == 0 || val_size == 0) throw ConfigError("stratified_split: sizes must be positive");
  if (train_size % m || val_size % m) {
    throw ConfigError("stratified_split: sizes " + std::to_string(train_size) + "|" + std::to_string(val_size) +
                      " not divisible by " + std::to_string(m) + " classes");
  }
  const std::size_t per_train = train_size / m, per_val = val_size / m;
  auto by_class = data.class_indices();
  Split<T> s;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < m; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < per_train + per_val) {
      throw ConfigError("stratified_split: class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                        " examples, need " + std::to_string(per_train + per_val));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    s.train_indices.insert(s.train_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_train));
    s.validation_indices.insert(s.validation_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(per_train),
                                idx.begin() + static_cast<std::ptrdiff_t>(per_train + per_val));
  }
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.validation_indices.begin(), s.validation_indices.end());
  s.train = subset(data, s.train_indices);
  s.validation = subset(data, s.validation_indices);
  return s;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

#define PKGCN_INSTANTIATE_DATA(T)                                                                          \
  template struct LabeledDataset<T>;                                                                      \
  template LabeledDataset<T> load_mnist(const std::filesystem::path&, const std::filesystem::path&);      \
  template LabeledDataset<T> parse_mnist(std::span<const std::uint8_t>, std::span<const std::uint8_t>);   \
  template LabeledDataset<T> load_cifar10(std::span<const std::filesystem::path>);                        \
  template LabeledDataset<T> parse_cifar10(std::span<const std::uint8_t>);                                \
  template LabeledDataset<T> subset(const LabeledDataset<T>&, std::span<const std::size_t>);              \
  template Split<T> stratified_split(const LabeledDataset<T>&, std::size_t, std::size_t, std::uint64_t);  \
  template std::pair<Tensor<T>, std::vector<std::int32_t>> gather(const LabeledDataset<T>&,               \
                                                                  std::span<const std::size_t>);

PKGCN_INSTANTIATE_DATA(float)
PKGCN_INSTANTIATE_DATA(double)

}  // namespace pkgcn
