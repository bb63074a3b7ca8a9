#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pkgcn/tensor.hpp"

// Differentiable primitives. Each forward has an explicit backward taking the
// upstream gradient; none of them keep hidden state.

namespace pkgcn {

// ---- matmul -----------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct MatmulGrads {
  Tensor<T> a;
  Tensor<T> b;
};

/// grad_a = G * b^T, grad_b = a^T * G.
template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out);

// ---- dense ------------------------------------------------------------------

/// y = x * W^T + bias, with x [B x in], W [out x in], bias [out].
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             bool want_input = true);

// ---- conv2d -----------------------------------------------------------------

/// Valid, stride-1 cross-correlation: input [B x C x H x W], kernels
/// [F x C x kh x kw], bias [F] -> [B x F x (H-kh+1) x (W-kw+1)].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;  // left empty when not requested
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                               const Tensor<T>& grad_out, bool want_input = true);

// ---- maxpool2 ---------------------------------------------------------------

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat input index of the winning element for every output element.
  std::vector<std::uint32_t> argmax;
};

/// 2x2 non-overlapping max pool. Ties go to the first element in row-major
/// order within the window.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& grad_out, std::span<const std::uint32_t> argmax,
                            const Shape& input_shape);

// ---- relu / activations -------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Upstream gradient masked by (input > 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

// ---- softmax cross-entropy ---------------------------------------------------

template <typename T>
struct CrossEntropyResult {
  double loss = 0.0;  // mean over the batch
  Tensor<T> grad_logits;
  Tensor<T> probs;
};

template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels);

/// Row-wise argmax of a [B x m] tensor; ties go to the lowest index.
template <typename T>
std::vector<std::int32_t> argmax_rows(const Tensor<T>& scores);

}  // namespace pkgcn
