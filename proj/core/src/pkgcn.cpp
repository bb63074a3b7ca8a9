#include "pkgcn/pkgcn.hpp"

#include <cmath>
#include <random>
#include <string>

#include "linalg.hpp"

namespace pkgcn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

std::string_view to_string(HeadVariant v) { return v == HeadVariant::v1 ? "v1" : "v2"; }

Activation parse_activation(std::string_view text) {
  for (auto a : {Activation::relu, Activation::identity, Activation::tanh}) {
    if (to_string(a) == text) return a;
  }
  throw ConfigError("unknown activation '" + std::string(text) + "' (expected relu, identity or tanh)");
}

HeadVariant parse_head_variant(std::string_view text) {
  if (text == "v1") return HeadVariant::v1;
  if (text == "v2") return HeadVariant::v2;
  throw ConfigError("unknown head variant '" + std::string(text) + "' (expected v1 or v2)");
}

namespace {

struct NodeLayout {
  std::size_t batch;
  std::size_t m;
  std::size_t width;
  bool single;
};

NodeLayout node_layout(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1], true};
  if (s.size() == 3) return {s[0], s[1], s[2], false};
  throw ShapeError(std::string(op) + ": node tensor must be [m x w] or [B x m x w], got " + shape_to_string(s));
}

Shape score_shape(const NodeLayout& l) { return l.single ? Shape{l.m} : Shape{l.batch, l.m}; }

template <typename T>
std::size_t data_batch(const Tensor<T>& d, bool single, std::size_t n, const char* op) {
  if (single ? (d.rank() == 1 && d.dim(0) == n) : (d.rank() == 2 && d.dim(1) == n)) {
    return single ? 1 : d.dim(0);
  }
  throw ShapeError(std::string(op) + ": data embedding " + shape_to_string(d.shape()) +
                   " does not match node width " + std::to_string(2 * n));
}

template <typename T>
T activate(Activation a, T z) {
  switch (a) {
    case Activation::relu: return z > T(0) ? z : T(0);
    case Activation::identity: return z;
    case Activation::tanh: return std::tanh(z);
  }
  return z;
}

template <typename T>
T activation_slope(Activation a, T z, T h) {
  switch (a) {
    case Activation::relu: return z > T(0) ? T(1) : T(0);
    case Activation::identity: return T(1);
    case Activation::tanh: return T(1) - h * h;
  }
  return T(1);
}

}  // namespace

template <typename T>
Tensor<T> assemble_node_features(const Tensor<T>& d, const Tensor<T>& class_emb) {
  if (class_emb.rank() != 2) {
    throw ShapeError("assemble_node_features: class embeddings must be [m x n], got " +
                     shape_to_string(class_emb.shape()));
  }
  const std::size_t m = class_emb.dim(0), n = class_emb.dim(1);
  const bool single = d.rank() == 1;
  if (!(single ? d.dim(0) == n : (d.rank() == 2 && d.dim(1) == n))) {
    throw ShapeError("assemble_node_features: data embedding " + shape_to_string(d.shape()) +
                     " does not match class embeddings " + shape_to_string(class_emb.shape()));
  }
  const std::size_t B = single ? 1 : d.dim(0);
  Tensor<T> x(single ? Shape{m, 2 * n} : Shape{B, m, 2 * n});
  T* out = x.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    const T* db = d.data().data() + b * n;
    for (std::size_t i = 0; i < m; ++i) {
      T* row = out + (b * m + i) * 2 * n;
      std::copy(db, db + n, row);
      std::copy(class_emb.data().data() + i * n, class_emb.data().data() + (i + 1) * n, row + n);
    }
  }
  return x;
}

template <typename T>
NodeFeatureGrads<T> assemble_node_features_backward(const Tensor<T>& grad_x) {
  const NodeLayout l = node_layout(grad_x.shape(), "assemble_node_features_backward");
  if (l.width % 2) throw ShapeError("assemble_node_features_backward: odd node width");
  const std::size_t n = l.width / 2;
  NodeFeatureGrads<T> g{Tensor<T>(l.single ? Shape{n} : Shape{l.batch, n}), Tensor<T>({l.m, n})};
  const T* gx = grad_x.data().data();
  for (std::size_t b = 0; b < l.batch; ++b) {
    T* gd = g.d.data().data() + b * n;
    for (std::size_t i = 0; i < l.m; ++i) {
      const T* row = gx + (b * l.m + i) * l.width;
      T* gc = g.class_emb.data().data() + i * n;
      for (std::size_t k = 0; k < n; ++k) {
        gd[k] += row[k];
        gc[k] += row[n + k];
      }
    }
  }
  return g;
}

template <typename T>
GcnOutput<T> gcn_forward(const Tensor<T>& adjacency, const Tensor<T>& x, const GcnParams<T>& gcn) {
  const NodeLayout l = node_layout(x.shape(), "gcn_forward");
  if (adjacency.shape() != Shape{l.m, l.m}) {
    throw ShapeError("gcn_forward: adjacency " + shape_to_string(adjacency.shape()) + " does not match " +
                     std::to_string(l.m) + " nodes");
  }
  if (gcn.weight.shape() != Shape{l.width, l.width}) {
    throw ShapeError("gcn_forward: weight " + shape_to_string(gcn.weight.shape()) + " does not match node width " +
                     std::to_string(l.width));
  }
  GcnOutput<T> out{Tensor<T>(x.shape()), Tensor<T>(x.shape()), Tensor<T>(x.shape())};
  const std::size_t plane = l.m * l.width;
  for (std::size_t b = 0; b < l.batch; ++b) {
    detail::gemm(adjacency.data().data(), l.m, l.m, false, x.data().data() + b * plane, l.m, l.width, false,
                 out.aggregated.data().data() + b * plane, false);
  }
  detail::gemm(out.aggregated.data().data(), l.batch * l.m, l.width, false, gcn.weight.data().data(), l.width,
               l.width, false, out.preactivation.data().data(), false);
  for (std::size_t i = 0; i < out.output.size(); ++i) out.output[i] = activate(gcn.activation, out.preactivation[i]);
  return out;
}

template <typename T>
GcnGrads<T> gcn_backward(const Tensor<T>& adjacency, const GcnParams<T>& gcn, const GcnOutput<T>& fwd,
                         const Tensor<T>& grad_output) {
  require_same_shape(grad_output.shape(), fwd.output.shape(), "gcn_backward");
  const NodeLayout l = node_layout(grad_output.shape(), "gcn_backward");
  Tensor<T> grad_z = grad_output;
  for (std::size_t i = 0; i < grad_z.size(); ++i) {
    grad_z[i] *= activation_slope(gcn.activation, fwd.preactivation[i], fwd.output[i]);
  }
  GcnGrads<T> g{Tensor<T>(grad_output.shape()), Tensor<T>(gcn.weight.shape())};
  const std::size_t rows = l.batch * l.m;
  detail::gemm(fwd.aggregated.data().data(), rows, l.width, true, grad_z.data().data(), rows, l.width, false,
               g.weight.data().data(), false);
  Tensor<T> grad_agg(grad_output.shape());
  detail::gemm(grad_z.data().data(), rows, l.width, false, gcn.weight.data().data(), l.width, l.width, true,
               grad_agg.data().data(), false);
  const std::size_t plane = l.m * l.width;
  for (std::size_t b = 0; b < l.batch; ++b) {
    detail::gemm(adjacency.data().data(), l.m, l.m, true, grad_agg.data().data() + b * plane, l.m, l.width, false,
                 g.x.data().data() + b * plane, false);
  }
  return g;
}

template <typename T>
Tensor<T> score_v1(const Tensor<T>& d, const Tensor<T>& class_emb, const Tensor<T>& h) {
  const NodeLayout l = node_layout(h.shape(), "score_v1");
  const std::size_t n = l.width / 2;
  if (l.width % 2 || class_emb.shape() != Shape{l.m, n}) {
    throw ShapeError("score_v1: class embeddings " + shape_to_string(class_emb.shape()) + " do not match H " +
                     shape_to_string(h.shape()));
  }
  if (data_batch(d, l.single, n, "score_v1") != l.batch) throw ShapeError("score_v1: batch sizes differ");
  Tensor<T> s(score_shape(l));
  for (std::size_t b = 0; b < l.batch; ++b) {
    const T* db = d.data().data() + b * n;
    for (std::size_t i = 0; i < l.m; ++i) {
      const T* hi = h.data().data() + (b * l.m + i) * l.width;
      const T* ci = class_emb.data().data() + i * n;
      T acc = T(0);
      for (std::size_t k = 0; k < n; ++k) acc += db[k] * hi[n + k] + ci[k] * hi[k];
      s[b * l.m + i] = acc;
    }
  }
  return s;
}

template <typename T>
ScoreV1Grads<T> score_v1_backward(const Tensor<T>& d, const Tensor<T>& class_emb, const Tensor<T>& h,
                                  const Tensor<T>& grad_scores) {
  const NodeLayout l = node_layout(h.shape(), "score_v1_backward");
  const std::size_t n = l.width / 2;
  if (data_batch(d, l.single, n, "score_v1_backward") != l.batch || class_emb.shape() != Shape{l.m, n}) {
    throw ShapeError("score_v1_backward: inputs do not match H " + shape_to_string(h.shape()));
  }
  require_same_shape(grad_scores.shape(), score_shape(l), "score_v1_backward");
  ScoreV1Grads<T> g{Tensor<T>(d.shape()), Tensor<T>(class_emb.shape()), Tensor<T>(h.shape())};
  for (std::size_t b = 0; b < l.batch; ++b) {
    const T* db = d.data().data() + b * n;
    T* gd = g.d.data().data() + b * n;
    for (std::size_t i = 0; i < l.m; ++i) {
      const T gs = grad_scores[b * l.m + i];
      const T* hi = h.data().data() + (b * l.m + i) * l.width;
      T* ghi = g.h.data().data() + (b * l.m + i) * l.width;
      const T* ci = class_emb.data().data() + i * n;
      T* gci = g.class_emb.data().data() + i * n;
      for (std::size_t k = 0; k < n; ++k) {
        gd[k] += gs * hi[n + k];
        gci[k] += gs * hi[k];
        ghi[n + k] = gs * db[k];
        ghi[k] = gs * ci[k];
      }
    }
  }
  return g;
}

template <typename T>
ScoreV2Output<T> score_v2(const Tensor<T>& x, const Tensor<T>& h, const MergeHeadParams<T>& head) {
  require_same_shape(x.shape(), h.shape(), "score_v2");
  const NodeLayout l = node_layout(x.shape(), "score_v2");
  const std::size_t in_w = 2 * l.width;
  if (head.weight.rank() != 2 || head.weight.dim(0) != in_w || head.bias.rank() != 1 ||
      head.bias.size() != head.weight.dim(1) || head.bias.size() % 2) {
    throw ShapeError("score_v2: head weight " + shape_to_string(head.weight.shape()) + " / bias " +
                     shape_to_string(head.bias.shape()) + " incompatible with node width " + std::to_string(l.width));
  }
  const std::size_t rows = l.batch * l.m, out_w = head.bias.size(), half = out_w / 2;
  ScoreV2Output<T> r{Tensor<T>(score_shape(l)), Tensor<T>({rows, in_w}), Tensor<T>({rows, out_w})};
  for (std::size_t r_i = 0; r_i < rows; ++r_i) {
    T* u = r.merged.data().data() + r_i * in_w;
    std::copy_n(x.data().data() + r_i * l.width, l.width, u);
    std::copy_n(h.data().data() + r_i * l.width, l.width, u + l.width);
  }
  detail::gemm(r.merged.data().data(), rows, in_w, false, head.weight.data().data(), in_w, out_w, false,
               r.q.data().data(), false);
  for (std::size_t r_i = 0; r_i < rows; ++r_i) {
    T* q = r.q.data().data() + r_i * out_w;
    T acc = T(0);
    for (std::size_t k = 0; k < out_w; ++k) q[k] += head.bias[k];
    for (std::size_t k = 0; k < half; ++k) acc += q[k] * q[half + k];
    r.scores[r_i] = acc;
  }
  return r;
}

template <typename T>
ScoreV2Grads<T> score_v2_backward(const Tensor<T>& x, const Tensor<T>& h, const MergeHeadParams<T>& head,
                                  const ScoreV2Output<T>& fwd, const Tensor<T>& grad_scores) {
  require_same_shape(x.shape(), h.shape(), "score_v2_backward");
  const NodeLayout l = node_layout(x.shape(), "score_v2_backward");
  require_same_shape(grad_scores.shape(), score_shape(l), "score_v2_backward");
  const std::size_t rows = l.batch * l.m, in_w = 2 * l.width, out_w = head.bias.size(), half = out_w / 2;
  if (fwd.q.shape() != Shape{rows, out_w} || fwd.merged.shape() != Shape{rows, in_w}) {
    throw StateError("score_v2_backward: forward cache does not match inputs");
  }
  Tensor<T> grad_q({rows, out_w});
  for (std::size_t r = 0; r < rows; ++r) {
    const T gs = grad_scores[r];
    const T* q = fwd.q.data().data() + r * out_w;
    T* gq = grad_q.data().data() + r * out_w;
    for (std::size_t k = 0; k < half; ++k) {
      gq[k] = gs * q[half + k];
      gq[half + k] = gs * q[k];
    }
  }
  ScoreV2Grads<T> g{Tensor<T>(x.shape()), Tensor<T>(h.shape()), Tensor<T>(head.weight.shape()),
                    Tensor<T>(head.bias.shape())};
  detail::gemm(fwd.merged.data().data(), rows, in_w, true, grad_q.data().data(), rows, out_w, false,
               g.weight.data().data(), false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < out_w; ++k) g.bias[k] += grad_q[r * out_w + k];
  }
  Tensor<T> grad_u({rows, in_w});
  detail::gemm(grad_q.data().data(), rows, out_w, false, head.weight.data().data(), in_w, out_w, true,
               grad_u.data().data(), false);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gu = grad_u.data().data() + r * in_w;
    std::copy_n(gu, l.width, g.x.data().data() + r * l.width);
    std::copy_n(gu + l.width, l.width, g.h.data().data() + r * l.width);
  }
  return g;
}

template <typename T>
std::vector<Tensor<T>*> PkGcnModel<T>::trainable() {
  std::vector<Tensor<T>*> out;
  for (auto& p : base.params()) out.push_back(&p.value);
  out.push_back(&gcn.weight);
  if (variant == HeadVariant::v2) {
    out.push_back(&head.weight);
    out.push_back(&head.bias);
  }
  return out;
}

template <typename T>
std::vector<Shape> PkGcnModel<T>::trainable_shapes() const {
  std::vector<Shape> out;
  for (const auto& p : base.params()) out.push_back(p.value.shape());
  out.push_back(gcn.weight.shape());
  if (variant == HeadVariant::v2) {
    out.push_back(head.weight.shape());
    out.push_back(head.bias.shape());
  }
  return out;
}

template <typename T>
PkGcnModel<T> assemble_pkgcn(Model<T> base, SimilarityGraph similarity, const NormalizedAdjacency& adjacency,
                             const PkGcnOptions& options) {
  const std::size_t m = base.num_classes(), n = base.embedding_dim();
  if (adjacency.m != m || similarity.m != m) {
    throw ShapeError("assemble_pkgcn: graph has " + std::to_string(adjacency.m) + " nodes but model has " +
                     std::to_string(m) + " classes");
  }
  if (options.identity_noise < 0.0) throw ConfigError("assemble_pkgcn: identity noise must be non-negative");
  PkGcnModel<T> model;
  model.base = std::move(base);
  model.similarity = std::move(similarity);
  model.adjacency = Tensor<T>({m, m});
  for (std::size_t i = 0; i < m * m; ++i) model.adjacency[i] = static_cast<T>(adjacency.values[i]);
  model.variant = options.variant;

  std::mt19937_64 rng(options.seed);
  model.gcn.activation = options.activation;
  model.gcn.weight = Tensor<T>({2 * n, 2 * n});
  std::uniform_real_distribution<double> noise(-options.identity_noise, options.identity_noise);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    for (std::size_t j = 0; j < 2 * n; ++j) {
      const double v = (i == j ? 1.0 : 0.0) + (options.identity_noise > 0.0 ? noise(rng) : 0.0);
      model.gcn.weight.at(i, j) = static_cast<T>(v);
    }
  }
  if (options.variant == HeadVariant::v2) {
    const std::size_t l = options.head_half_width == 0 ? n : options.head_half_width;
    const std::size_t in_w = 4 * n;
    model.head.weight = Tensor<T>({in_w, 2 * l});
    const double limit = std::sqrt(6.0 / static_cast<double>(in_w));
    std::uniform_real_distribution<double> he(-limit, limit);
    for (auto& v : model.head.weight.data()) v = static_cast<T>(he(rng));
    model.head.bias = Tensor<T>({2 * l});
  }
  return model;
}

template <typename T>
PkGcnForward<T> pkgcn_forward(const PkGcnModel<T>& model, const Tensor<T>& batch) {
  PkGcnForward<T> f;
  f.base_cache = forward_features(model.base, batch);
  const Tensor<T>& d = f.base_cache.embedding;
  const Tensor<T>& class_emb = model.base.classifier_weight();
  f.node_features = assemble_node_features(d, class_emb);
  f.gcn = gcn_forward(model.adjacency, f.node_features, model.gcn);
  if (model.variant == HeadVariant::v1) {
    f.logits = score_v1(d, class_emb, f.gcn.output);
  } else {
    f.head = score_v2(f.node_features, f.gcn.output, model.head);
    f.logits = f.head.scores;
  }
  return f;
}

template <typename T>
std::vector<Tensor<T>> pkgcn_backward(const PkGcnModel<T>& model, const PkGcnForward<T>& fwd,
                                      const Tensor<T>& grad_logits) {
  const std::size_t B = fwd.base_cache.batch, m = model.base.num_classes();
  if (grad_logits.shape() != Shape{B, m}) {
    throw StateError("pkgcn_backward: gradient " + shape_to_string(grad_logits.shape()) +
                     " does not match cached batch of " + std::to_string(B));
  }
  const Tensor<T>& d = fwd.base_cache.embedding;
  const Tensor<T>& class_emb = model.base.classifier_weight();

  Tensor<T> grad_h, grad_x_head;
  Tensor<T> grad_d(d.shape()), grad_c(class_emb.shape());
  std::vector<Tensor<T>> grads;
  Tensor<T> grad_head_w, grad_head_b;
  if (model.variant == HeadVariant::v1) {
    auto g = score_v1_backward(d, class_emb, fwd.gcn.output, grad_logits);
    grad_h = std::move(g.h);
    grad_d = std::move(g.d);
    grad_c = std::move(g.class_emb);
  } else {
    auto g = score_v2_backward(fwd.node_features, fwd.gcn.output, model.head, fwd.head, grad_logits);
    grad_h = std::move(g.h);
    grad_x_head = std::move(g.x);
    grad_head_w = std::move(g.weight);
    grad_head_b = std::move(g.bias);
  }
  auto gg = gcn_backward(model.adjacency, model.gcn, fwd.gcn, grad_h);
  if (!grad_x_head.empty()) {
    for (std::size_t i = 0; i < gg.x.size(); ++i) gg.x[i] += grad_x_head[i];
  }
  auto nf = assemble_node_features_backward(gg.x);
  for (std::size_t i = 0; i < grad_d.size(); ++i) grad_d[i] += nf.d[i];
  for (std::size_t i = 0; i < grad_c.size(); ++i) grad_c[i] += nf.class_emb[i];

  Gradients<T> base_grads = zero_gradients(model.base);
  base_grads[base_grads.size() - 2] = std::move(grad_c);
  backward_features(model.base, fwd.base_cache, grad_d, base_grads);

  grads = std::move(base_grads);
  grads.push_back(std::move(gg.weight));
  if (model.variant == HeadVariant::v2) {
    grads.push_back(std::move(grad_head_w));
    grads.push_back(std::move(grad_head_b));
  }
  return grads;
}

#define PKGCN_INSTANTIATE_PKGCN(T)                                                                                  \
  template Tensor<T> assemble_node_features(const Tensor<T>&, const Tensor<T>&);                                   \
  template NodeFeatureGrads<T> assemble_node_features_backward(const Tensor<T>&);                                  \
  template GcnOutput<T> gcn_forward(const Tensor<T>&, const Tensor<T>&, const GcnParams<T>&);                      \
  template GcnGrads<T> gcn_backward(const Tensor<T>&, const GcnParams<T>&, const GcnOutput<T>&, const Tensor<T>&); \
  template Tensor<T> score_v1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                               \
  template ScoreV1Grads<T> score_v1_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                             const Tensor<T>&);                                                    \
  template ScoreV2Output<T> score_v2(const Tensor<T>&, const Tensor<T>&, const MergeHeadParams<T>&);               \
  template ScoreV2Grads<T> score_v2_backward(const Tensor<T>&, const Tensor<T>&, const MergeHeadParams<T>&,        \
                                             const ScoreV2Output<T>&, const Tensor<T>&);                           \
  template struct PkGcnModel<T>;                                                                                   \
  template PkGcnModel<T> assemble_pkgcn(Model<T>, SimilarityGraph, const NormalizedAdjacency&, const PkGcnOptions&); \
  template PkGcnForward<T> pkgcn_forward(const PkGcnModel<T>&, const Tensor<T>&);                                  \
  template std::vector<Tensor<T>> pkgcn_backward(const PkGcnModel<T>&, const PkGcnForward<T>&, const Tensor<T>&);

PKGCN_INSTANTIATE_PKGCN(float)
PKGCN_INSTANTIATE_PKGCN(double)

}  // namespace pkgcn
