#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pkgcn/tensor.hpp"

namespace pkgcn {

enum class LayerKind { conv, maxpool2, relu, flatten, dense };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t filters = 0;  // conv
  std::size_t kernel = 0;   // conv, square
  std::size_t units = 0;    // dense

  static LayerSpec conv(std::size_t filters, std::size_t kernel) { return {LayerKind::conv, filters, kernel, 0}; }
  static LayerSpec maxpool2() { return {LayerKind::maxpool2}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, 0, 0, units}; }

  bool operator==(const LayerSpec&) const = default;
};

struct InputShape {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;

  bool operator==(const InputShape&) const = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

/// Gradient tensors aligned index-for-index with Model::params().
template <typename T>
using Gradients = std::vector<Tensor<T>>;

/// Ordered layer stack ending in a dense classifier n -> m. The activation
/// entering the classifier is the data embedding; the classifier weight
/// [m x n] doubles as the class-embedding matrix.
template <typename T>
class Model {
 public:
  /// Validates shape compatibility layer by layer and draws He-uniform
  /// weights (zero biases) from `seed`.
  static Model build(std::vector<LayerSpec> layers, InputShape input, std::uint64_t seed);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  InputShape input_shape() const noexcept { return input_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }

  std::vector<Parameter<T>>& params() noexcept { return params_; }
  const std::vector<Parameter<T>>& params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept;

  /// Index into params() of the first parameter owned by `layer`, or npos.
  std::size_t param_index(std::size_t layer) const { return param_index_.at(layer); }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Tensor<T>& classifier_weight() { return params_[params_.size() - 2].value; }
  const Tensor<T>& classifier_weight() const { return params_[params_.size() - 2].value; }
  Tensor<T>& classifier_bias() { return params_.back().value; }
  const Tensor<T>& classifier_bias() const { return params_.back().value; }

  Parameter<T>* find(std::string_view name);

 private:
  std::vector<LayerSpec> layers_;
  InputShape input_{};
  std::size_t num_classes_ = 0;
  std::size_t embedding_dim_ = 0;
  std::vector<Parameter<T>> params_;
  std::vector<std::size_t> param_index_;
};

/// Preset layer lists: cnn1, cnn2 (28x28x1 input) and vgg11 (32x32x3 input).
/// `width_divisor` shrinks vgg11 conv/dense widths for smoke tests.
std::vector<LayerSpec> preset_layers(std::string_view preset, std::size_t width_divisor = 1);
InputShape preset_input(std::string_view preset);

template <typename T>
Model<T> build_base_model(std::string_view preset, std::uint64_t seed, std::size_t width_divisor = 1);

template <typename T>
struct LayerCache {
  Tensor<T> input;  // kept for conv, relu and dense
  Shape input_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct ForwardCache {
  const void* owner = nullptr;
  std::size_t batch = 0;
  std::vector<LayerCache<T>> layers;  // every layer except the classifier
  Tensor<T> embedding;                // activation feeding the classifier [B x n]
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  ForwardCache<T> cache;
};

/// Runs every layer but the classifier.
template <typename T>
ForwardCache<T> forward_features(const Model<T>& model, const Tensor<T>& batch);

template <typename T>
ForwardResult<T> forward(const Model<T>& model, const Tensor<T>& batch);

template <typename T>
Tensor<T> data_embedding(const Model<T>& model, const Tensor<T>& batch);

/// Copy of the classifier weight matrix [m x n]; bias excluded.
template <typename T>
Tensor<T> class_embeddings(const Model<T>& model);

template <typename T>
Gradients<T> zero_gradients(const Model<T>& model);

/// Gradients for every parameter given dLoss/dlogits.
template <typename T>
Gradients<T> backward(const Model<T>& model, const ForwardCache<T>& cache, const Tensor<T>& grad_logits);

/// Backpropagates dLoss/d(embedding) through the feature layers, adding into
/// `grads`. The classifier's entries are left untouched.
template <typename T>
void backward_features(const Model<T>& model, const ForwardCache<T>& cache, const Tensor<T>& grad_embedding,
                       Gradients<T>& grads);

}  // namespace pkgcn
