#include "pkgcn/nn.hpp"

#include <cmath>
#include <random>

#include "pkgcn/ops.hpp"

namespace pkgcn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::conv, LayerKind::maxpool2, LayerKind::relu, LayerKind::flatten, LayerKind::dense}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

std::vector<LayerSpec> preset_layers(std::string_view preset, std::size_t width_divisor) {
  using L = LayerSpec;
  if (width_divisor == 0) throw ConfigError("width divisor must be positive");
  if (preset == "cnn1") {
    return {L::conv(32, 3), L::relu(), L::maxpool2(), L::flatten(), L::dense(128), L::relu(), L::dense(10)};
  }
  if (preset == "cnn2") {
    // 28 -> 26 -> 13 -> 10 -> 5; the 4x4 second kernel keeps the pool input even.
    return {L::conv(32, 3), L::relu(), L::maxpool2(), L::conv(64, 4), L::relu(), L::maxpool2(),
            L::flatten(),   L::dense(128), L::relu(), L::dense(10)};
  }
  if (preset == "vgg11") {
    // VGG-11 conv widths with valid 3x3 convs: 32 -> 30 -> pool 15 -> 13 -> ... -> 1.
    auto w = [&](std::size_t c) { return std::max<std::size_t>(1, c / width_divisor); };
    std::vector<LayerSpec> layers{L::conv(w(64), 3), L::relu(), L::maxpool2()};
    for (std::size_t c : {128, 256, 256, 512, 512, 512, 512}) {
      layers.push_back(L::conv(w(c), 3));
      layers.push_back(L::relu());
    }
    layers.push_back(L::flatten());
    layers.push_back(L::dense(w(512)));
    layers.push_back(L::relu());
    layers.push_back(L::dense(10));
    return layers;
  }
  throw ConfigError("unknown architecture preset '" + std::string(preset) + "' (expected cnn1, cnn2 or vgg11)");
}

InputShape preset_input(std::string_view preset) {
  if (preset == "cnn1" || preset == "cnn2") return {1, 28, 28};
  if (preset == "vgg11") return {3, 32, 32};
  throw ConfigError("unknown architecture preset '" + std::string(preset) + "'");
}

template <typename T>
Model<T> Model<T>::build(std::vector<LayerSpec> layers, InputShape input, std::uint64_t seed) {
  if (layers.empty() || layers.back().kind != LayerKind::dense) {
    throw ConfigError("model must end with a dense classifier layer");
  }
  if (input.channels == 0 || input.height == 0 || input.width == 0) throw ConfigError("input shape must be positive");

  Model<T> model;
  model.input_ = input;
  std::mt19937_64 rng(seed);

  bool flat = false;
  std::size_t C = input.channels, H = input.height, W = input.width, features = 0;
  auto he_uniform = [&](Shape shape, std::size_t fan_in) {
    Tensor<T> w(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
    return w;
  };
  auto where = [](std::size_t i, const LayerSpec& l) {
    return "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    model.param_index_.push_back(npos);
    switch (l.kind) {
      case LayerKind::conv: {
        if (flat) throw ConfigError(where(i, l) + " follows flatten");
        if (l.filters == 0 || l.kernel == 0) throw ConfigError(where(i, l) + " needs filters and kernel > 0");
        if (l.kernel > H || l.kernel > W) {
          throw ConfigError(where(i, l) + ": kernel " + std::to_string(l.kernel) + " larger than " +
                            std::to_string(H) + "x" + std::to_string(W) + " input");
        }
        model.param_index_.back() = model.params_.size();
        const std::string prefix = "layer" + std::to_string(i);
        model.params_.push_back({prefix + ".weight", he_uniform({l.filters, C, l.kernel, l.kernel}, C * l.kernel * l.kernel)});
        model.params_.push_back({prefix + ".bias", Tensor<T>({l.filters})});
        C = l.filters;
        H = H - l.kernel + 1;
        W = W - l.kernel + 1;
        break;
      }
      case LayerKind::maxpool2:
        if (flat) throw ConfigError(where(i, l) + " follows flatten");
        if (H % 2 || W % 2) {
          throw ConfigError(where(i, l) + ": odd spatial size " + std::to_string(H) + "x" + std::to_string(W));
        }
        H /= 2;
        W /= 2;
        break;
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        if (flat) throw ConfigError(where(i, l) + ": input already flat");
        flat = true;
        features = C * H * W;
        break;
      case LayerKind::dense: {
        if (!flat) throw ConfigError(where(i, l) + " requires a preceding flatten");
        if (l.units == 0) throw ConfigError(where(i, l) + " needs units > 0");
        if (i + 1 == layers.size()) model.embedding_dim_ = features;
        model.param_index_.back() = model.params_.size();
        const std::string prefix = "layer" + std::to_string(i);
        model.params_.push_back({prefix + ".weight", he_uniform({l.units, features}, features)});
        model.params_.push_back({prefix + ".bias", Tensor<T>({l.units})});
        features = l.units;
        break;
      }
    }
  }
  model.num_classes_ = layers.back().units;
  model.layers_ = std::move(layers);
  return model;
}

template <typename T>
std::size_t Model<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Parameter<T>* Model<T>::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
Model<T> build_base_model(std::string_view preset, std::uint64_t seed, std::size_t width_divisor) {
  return Model<T>::build(preset_layers(preset, width_divisor), preset_input(preset), seed);
}

template <typename T>
ForwardCache<T> forward_features(const Model<T>& model, const Tensor<T>& batch) {
  const InputShape in = model.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.height || batch.dim(3) != in.width) {
    throw ShapeError("forward: batch " + shape_to_string(batch.shape()) + " does not match model input [Bx" +
                     std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" + std::to_string(in.width) +
                     "]");
  }
  const auto& layers = model.layers();
  const auto& params = model.params();
  ForwardCache<T> cache;
  cache.owner = &model;
  cache.batch = batch.dim(0);
  cache.layers.resize(layers.size() - 1);

  Tensor<T> x = batch;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    LayerCache<T>& lc = cache.layers[i];
    lc.input_shape = x.shape();
    switch (layers[i].kind) {
      case LayerKind::conv: {
        const std::size_t p = model.param_index(i);
        Tensor<T> y = conv2d(x, params[p].value, params[p + 1].value);
        lc.input = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::maxpool2: {
        auto r = maxpool2(x);
        lc.argmax = std::move(r.argmax);
        x = std::move(r.output);
        break;
      }
      case LayerKind::relu: {
        Tensor<T> y = relu(x);
        lc.input = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::flatten: {
        const std::size_t B = x.dim(0);
        x = std::move(x).reshaped({B, x.size() / B});
        break;
      }
      case LayerKind::dense: {
        const std::size_t p = model.param_index(i);
        Tensor<T> y = dense(x, params[p].value, params[p + 1].value);
        lc.input = std::move(x);
        x = std::move(y);
        break;
      }
    }
  }
  cache.embedding = std::move(x);
  return cache;
}

template <typename T>
ForwardResult<T> forward(const Model<T>& model, const Tensor<T>& batch) {
  ForwardResult<T> r;
  r.cache = forward_features(model, batch);
  r.logits = dense(r.cache.embedding, model.classifier_weight(), model.classifier_bias());
  return r;
}

template <typename T>
Tensor<T> data_embedding(const Model<T>& model, const Tensor<T>& batch) {
  return forward_features(model, batch).embedding;
}

template <typename T>
Tensor<T> class_embeddings(const Model<T>& model) {
  return model.classifier_weight();
}

template <typename T>
Gradients<T> zero_gradients(const Model<T>& model) {
  Gradients<T> g;
  g.reserve(model.params().size());
  for (const auto& p : model.params()) g.emplace_back(p.value.shape());
  return g;
}

namespace {

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  require_same_shape(dst.shape(), src.shape(), "gradient accumulation");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void check_cache(const Model<T>& model, const ForwardCache<T>& cache, const Shape& grad_shape, std::size_t width) {
  if (cache.owner != &model || cache.layers.size() + 1 != model.layers().size()) {
    throw StateError("backward: forward cache was produced by a different model");
  }
  if (grad_shape.size() != 2 || grad_shape[0] != cache.batch || grad_shape[1] != width) {
    throw StateError("backward: gradient " + shape_to_string(grad_shape) + " does not match cached batch of " +
                     std::to_string(cache.batch));
  }
}

}  // namespace

template <typename T>
void backward_features(const Model<T>& model, const ForwardCache<T>& cache, const Tensor<T>& grad_embedding,
                       Gradients<T>& grads) {
  check_cache(model, cache, grad_embedding.shape(), model.embedding_dim());
  if (grads.size() != model.params().size()) throw StateError("backward: gradient list does not match parameters");
  const auto& layers = model.layers();
  const auto& params = model.params();

  Tensor<T> g = grad_embedding;
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    const LayerCache<T>& lc = cache.layers[i];
    const bool want_input = i > 0;
    switch (layers[i].kind) {
      case LayerKind::conv: {
        const std::size_t p = model.param_index(i);
        auto cg = conv2d_backward(lc.input, params[p].value, g, want_input);
        add_into(grads[p], cg.kernels);
        add_into(grads[p + 1], cg.bias);
        g = std::move(cg.input);
        break;
      }
      case LayerKind::maxpool2:
        g = maxpool2_backward(g, lc.argmax, lc.input_shape);
        break;
      case LayerKind::relu:
        g = relu_backward(lc.input, g);
        break;
      case LayerKind::flatten:
        g = std::move(g).reshaped(lc.input_shape);
        break;
      case LayerKind::dense: {
        const std::size_t p = model.param_index(i);
        auto dg = dense_backward(lc.input, params[p].value, g, want_input);
        add_into(grads[p], dg.weight);
        add_into(grads[p + 1], dg.bias);
        g = std::move(dg.input);
        break;
      }
    }
    if (!want_input) break;
  }
}

template <typename T>
Gradients<T> backward(const Model<T>& model, const ForwardCache<T>& cache, const Tensor<T>& grad_logits) {
  check_cache(model, cache, grad_logits.shape(), model.num_classes());
  Gradients<T> grads = zero_gradients(model);
  auto cg = dense_backward(cache.embedding, model.classifier_weight(), grad_logits, true);
  grads[grads.size() - 2] = std::move(cg.weight);
  grads.back() = std::move(cg.bias);
  backward_features(model, cache, cg.input, grads);
  return grads;
}

#define PKGCN_INSTANTIATE_NN(T)                                                                            \
  template class Model<T>;                                                                                \
  template Model<T> build_base_model<T>(std::string_view, std::uint64_t, std::size_t);                   \
  template ForwardCache<T> forward_features(const Model<T>&, const Tensor<T>&);                          \
  template ForwardResult<T> forward(const Model<T>&, const Tensor<T>&);                                  \
  template Tensor<T> data_embedding(const Model<T>&, const Tensor<T>&);                                  \
  template Tensor<T> class_embeddings(const Model<T>&);                                                  \
  template Gradients<T> zero_gradients(const Model<T>&);                                                 \
  template Gradients<T> backward(const Model<T>&, const ForwardCache<T>&, const Tensor<T>&);             \
  template void backward_features(const Model<T>&, const ForwardCache<T>&, const Tensor<T>&, Gradients<T>&);

PKGCN_INSTANTIATE_NN(float)
PKGCN_INSTANTIATE_NN(double)

}  // namespace pkgcn
