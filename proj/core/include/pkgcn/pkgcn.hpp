#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pkgcn/nn.hpp"
#include "pkgcn/simgraph.hpp"
#include "pkgcn/tensor.hpp"

// Graph-convolution head over per-class nodes. Node i of an example carries
// x_i = (d, c_i): the example's data embedding d [n] followed by the class
// embedding c_i [n]. One graph convolution H = act(A_hat X W) mixes the nodes,
// and a scoring head turns each node back into a class score.
//
// The node-level functions accept either one example (d [n], X/H [m x 2n],
// scores [m]) or a batch (d [B x n], X/H [B x m x 2n], scores [B x m]); the
// output rank follows the input rank.

namespace pkgcn {

enum class Activation { relu, identity, tanh };
enum class HeadVariant { v1, v2 };

std::string_view to_string(Activation a);
std::string_view to_string(HeadVariant v);
Activation parse_activation(std::string_view text);
HeadVariant parse_head_variant(std::string_view text);

template <typename T>
struct GcnParams {
  Tensor<T> weight;  // [2n x 2n]
  Activation activation = Activation::relu;
};

/// Fully connected merge layer of the second head: (x_i, h_i) [4n] -> q_i [2l].
template <typename T>
struct MergeHeadParams {
  Tensor<T> weight;  // [4n x 2l]
  Tensor<T> bias;    // [2l]

  std::size_t half_width() const noexcept { return bias.size() / 2; }
};

// ---- node features ----------------------------------------------------------

template <typename T>
Tensor<T> assemble_node_features(const Tensor<T>& d, const Tensor<T>& class_emb);

template <typename T>
struct NodeFeatureGrads {
  Tensor<T> d;          // same rank as the forward d
  Tensor<T> class_emb;  // [m x n], summed over the batch
};

/// grad_d sums the data half of every node row; grad_C takes the class half row by row.
template <typename T>
NodeFeatureGrads<T> assemble_node_features_backward(const Tensor<T>& grad_x);

// ---- graph convolution --------------------------------------------------------

template <typename T>
struct GcnOutput {
  Tensor<T> output;         // H = act(Z)
  Tensor<T> aggregated;     // A_hat X
  Tensor<T> preactivation;  // Z = A_hat X W
};

template <typename T>
GcnOutput<T> gcn_forward(const Tensor<T>& adjacency, const Tensor<T>& x, const GcnParams<T>& gcn);

template <typename T>
struct GcnGrads {
  Tensor<T> x;
  Tensor<T> weight;
};

/// grad_X = A_hat^T (act' * G) W^T, grad_W = (A_hat X)^T (act' * G). The
/// adjacency is a constant.
template <typename T>
GcnGrads<T> gcn_backward(const Tensor<T>& adjacency, const GcnParams<T>& gcn, const GcnOutput<T>& fwd,
                         const Tensor<T>& grad_output);

// ---- scoring heads ------------------------------------------------------------

/// s_i = <d, h_i[n:2n]> + <c_i, h_i[0:n]>.
template <typename T>
Tensor<T> score_v1(const Tensor<T>& d, const Tensor<T>& class_emb, const Tensor<T>& h);

template <typename T>
struct ScoreV1Grads {
  Tensor<T> d;
  Tensor<T> class_emb;
  Tensor<T> h;
};

template <typename T>
ScoreV1Grads<T> score_v1_backward(const Tensor<T>& d, const Tensor<T>& class_emb, const Tensor<T>& h,
                                  const Tensor<T>& grad_scores);

template <typename T>
struct ScoreV2Output {
  Tensor<T> scores;
  Tensor<T> merged;  // u_i = (x_i, h_i), [rows x 4n]
  Tensor<T> q;       // [rows x 2l]
};

/// q_i = (x_i, h_i) W_fc + b_fc; s_i = <q_i[0:l], q_i[l:2l]>.
template <typename T>
ScoreV2Output<T> score_v2(const Tensor<T>& x, const Tensor<T>& h, const MergeHeadParams<T>& head);

template <typename T>
struct ScoreV2Grads {
  Tensor<T> x;
  Tensor<T> h;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
ScoreV2Grads<T> score_v2_backward(const Tensor<T>& x, const Tensor<T>& h, const MergeHeadParams<T>& head,
                                  const ScoreV2Output<T>& fwd, const Tensor<T>& grad_scores);

// ---- assembled model --------------------------------------------------------

template <typename T>
struct PkGcnModel {
  Model<T> base;
  SimilarityGraph similarity;
  Tensor<T> adjacency;  // A_hat [m x m], fixed once assembled
  GcnParams<T> gcn;
  HeadVariant variant = HeadVariant::v1;
  MergeHeadParams<T> head;  // empty for v1

  /// Base parameters in order, then the GCN weight, then (v2) head weight and bias.
  std::vector<Tensor<T>*> trainable();
  std::vector<Shape> trainable_shapes() const;
  std::size_t base_param_count() const noexcept { return base.params().size(); }
};

struct PkGcnOptions {
  HeadVariant variant = HeadVariant::v1;
  Activation activation = Activation::relu;
  std::size_t head_half_width = 0;  // l; 0 selects n
  double identity_noise = 0.01;     // GCN weight = I + U(-noise, noise)
  std::uint64_t seed = 0;
};

template <typename T>
PkGcnModel<T> assemble_pkgcn(Model<T> base, SimilarityGraph similarity, const NormalizedAdjacency& adjacency,
                             const PkGcnOptions& options);

template <typename T>
struct PkGcnForward {
  Tensor<T> logits;  // [B x m]
  ForwardCache<T> base_cache;
  Tensor<T> node_features;  // [B x m x 2n]
  GcnOutput<T> gcn;
  ScoreV2Output<T> head;  // v2 only
};

template <typename T>
PkGcnForward<T> pkgcn_forward(const PkGcnModel<T>& model, const Tensor<T>& batch);

/// Gradients aligned with trainable(). The classifier bias gets zero since
/// the graph head does not use it.
template <typename T>
std::vector<Tensor<T>> pkgcn_backward(const PkGcnModel<T>& model, const PkGcnForward<T>& fwd,
                                      const Tensor<T>& grad_logits);

}  // namespace pkgcn
