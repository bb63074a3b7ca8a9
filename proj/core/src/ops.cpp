#include "pkgcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "linalg.hpp"

namespace pkgcn {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_to_string(s));
  }
}

// Unfold one image [C x H x W] into [C*kh*kw x Ho*Wo].
template <typename T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw, T* cols) {
  const std::size_t Ho = H - kh + 1, Wo = W - kw + 1;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t u = 0; u < kh; ++u) {
      for (std::size_t v = 0; v < kw; ++v) {
        T* row = cols + ((c * kh + u) * kw + v) * Ho * Wo;
        for (std::size_t y = 0; y < Ho; ++y) {
          const T* src = img + (c * H + y + u) * W + v;
          std::copy(src, src + Wo, row + y * Wo);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw, T* img) {
  const std::size_t Ho = H - kh + 1, Wo = W - kw + 1;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t u = 0; u < kh; ++u) {
      for (std::size_t v = 0; v < kw; ++v) {
        const T* row = cols + ((c * kh + u) * kw + v) * Ho * Wo;
        for (std::size_t y = 0; y < Ho; ++y) {
          T* dst = img + (c * H + y + u) * W + v;
          const T* src = row + y * Wo;
          for (std::size_t x = 0; x < Wo; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul", "a");
  require_rank(b.shape(), 2, "matmul", "b");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> out({a.dim(0), b.dim(1)});
  detail::gemm(a.data().data(), a.dim(0), a.dim(1), false, b.data().data(), b.dim(0), b.dim(1), false,
               out.data().data(), false);
  return out;
}

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out) {
  require_rank(grad_out.shape(), 2, "matmul_backward", "grad_out");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0) || grad_out.dim(0) != a.dim(0) ||
      grad_out.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_backward: incompatible shapes " + shape_to_string(a.shape()) + ", " +
                     shape_to_string(b.shape()) + ", grad " + shape_to_string(grad_out.shape()));
  }
  MatmulGrads<T> g{Tensor<T>(a.shape()), Tensor<T>(b.shape())};
  detail::gemm(grad_out.data().data(), grad_out.dim(0), grad_out.dim(1), false, b.data().data(), b.dim(0), b.dim(1),
               true, g.a.data().data(), false);
  detail::gemm(a.data().data(), a.dim(0), a.dim(1), true, grad_out.data().data(), grad_out.dim(0), grad_out.dim(1),
               false, g.b.data().data(), false);
  return g;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "dense", "input");
  require_rank(weight.shape(), 2, "dense", "weight");
  if (x.dim(1) != weight.dim(1) || bias.size() != weight.dim(0)) {
    throw ShapeError("dense: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(weight.shape()) + " / bias " + shape_to_string(bias.shape()));
  }
  const std::size_t B = x.dim(0), out_w = weight.dim(0);
  Tensor<T> out({B, out_w});
  detail::gemm(x.data().data(), B, x.dim(1), false, weight.data().data(), out_w, weight.dim(1), true,
               out.data().data(), false);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < out_w; ++j) out.at(b, j) += bias[j];
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             bool want_input) {
  if (grad_out.rank() != 2 || x.rank() != 2 || grad_out.dim(0) != x.dim(0) || grad_out.dim(1) != weight.dim(0) ||
      x.dim(1) != weight.dim(1)) {
    throw ShapeError("dense_backward: grad " + shape_to_string(grad_out.shape()) + " incompatible with input " +
                     shape_to_string(x.shape()) + " / weight " + shape_to_string(weight.shape()));
  }
  const std::size_t B = x.dim(0), in_w = x.dim(1), out_w = weight.dim(0);
  DenseGrads<T> g;
  g.weight = Tensor<T>(weight.shape());
  detail::gemm(grad_out.data().data(), B, out_w, true, x.data().data(), B, in_w, false, g.weight.data().data(),
               false);
  g.bias = Tensor<T>({out_w});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < out_w; ++j) g.bias[j] += grad_out.at(b, j);
  }
  if (want_input) {
    g.input = Tensor<T>(x.shape());
    detail::gemm(grad_out.data().data(), B, out_w, false, weight.data().data(), out_w, in_w, false,
                 g.input.data().data(), false);
  }
  return g;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(kernels.shape(), 4, "conv2d", "kernels");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != C) {
    throw ShapeError("conv2d: kernel channels " + shape_to_string(kernels.shape()) + " do not match input " +
                     shape_to_string(input.shape()));
  }
  if (kh > H || kw > W) {
    throw ShapeError("conv2d: kernel " + shape_to_string(kernels.shape()) + " larger than input " +
                     shape_to_string(input.shape()));
  }
  if (bias.size() != F) {
    throw ShapeError("conv2d: bias " + shape_to_string(bias.shape()) + " does not match kernels " +
                     shape_to_string(kernels.shape()));
  }
  const std::size_t Ho = H - kh + 1, Wo = W - kw + 1, K = C * kh * kw, P = Ho * Wo;
  Tensor<T> out({B, F, Ho, Wo});
  std::vector<T> cols(K * P);
  for (std::size_t b = 0; b < B; ++b) {
    im2col(input.data().data() + b * C * H * W, C, H, W, kh, kw, cols.data());
    T* dst = out.data().data() + b * F * P;
    detail::gemm(kernels.data().data(), F, K, false, cols.data(), K, P, false, dst, false);
    for (std::size_t f = 0; f < F; ++f) {
      T* row = dst + f * P;
      for (std::size_t p = 0; p < P; ++p) row[p] += bias[f];
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& grad_out,
                               bool want_input) {
  require_rank(input.shape(), 4, "conv2d_backward", "input");
  require_rank(kernels.shape(), 4, "conv2d_backward", "kernels");
  require_rank(grad_out.shape(), 4, "conv2d_backward", "grad_out");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != C || kh > H || kw > W) {
    throw ShapeError("conv2d_backward: kernels " + shape_to_string(kernels.shape()) + " incompatible with input " +
                     shape_to_string(input.shape()));
  }
  const std::size_t Ho = H - kh + 1, Wo = W - kw + 1, K = C * kh * kw, P = Ho * Wo;
  require_same_shape(grad_out.shape(), Shape{B, F, Ho, Wo}, "conv2d_backward");

  Conv2dGrads<T> g;
  g.kernels = Tensor<T>(kernels.shape());
  g.bias = Tensor<T>({F});
  if (want_input) g.input = Tensor<T>(input.shape());
  std::vector<T> cols(K * P);
  std::vector<T> grad_cols(want_input ? K * P : 0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* gb = grad_out.data().data() + b * F * P;
    im2col(input.data().data() + b * C * H * W, C, H, W, kh, kw, cols.data());
    detail::gemm(gb, F, P, false, cols.data(), K, P, true, g.kernels.data().data(), true);
    for (std::size_t f = 0; f < F; ++f) {
      const T* row = gb + f * P;
      T acc = T(0);
      for (std::size_t p = 0; p < P; ++p) acc += row[p];
      g.bias[f] += acc;
    }
    if (want_input) {
      detail::gemm(kernels.data().data(), F, K, true, gb, F, P, false, grad_cols.data(), false);
      col2im_add(grad_cols.data(), C, H, W, kh, kw, g.input.data().data() + b * C * H * W);
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "maxpool2", "input");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("maxpool2: spatial dimensions must be even, got " + shape_to_string(input.shape()));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult<T> r{Tensor<T>({B, C, Ho, Wo}), std::vector<std::uint32_t>(B * C * Ho * Wo)};
  const T* in = input.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t x = 0; x < Wo; ++x, ++o) {
        const std::size_t cand[4] = {base + 2 * y * W + 2 * x, base + 2 * y * W + 2 * x + 1,
                                     base + (2 * y + 1) * W + 2 * x, base + (2 * y + 1) * W + 2 * x + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (in[cand[k]] > in[best]) best = cand[k];
        }
        r.output[o] = in[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& grad_out, std::span<const std::uint32_t> argmax,
                            const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool2_backward: argmax cache has " + std::to_string(argmax.size()) +
                     " entries, gradient " + shape_to_string(grad_out.shape()));
  }
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) throw ShapeError("maxpool2_backward: argmax index outside input");
    g[argmax[i]] += grad_out[i];
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(input[i] > T(0))) g[i] = T(0);
  }
  return g;
}

template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t B = logits.dim(0), m = logits.dim(1);
  if (labels.size() != B) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_to_string(logits.shape()));
  }
  CrossEntropyResult<T> r{0.0, Tensor<T>(logits.shape()), Tensor<T>(logits.shape())};
  std::vector<double> e(m);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= m) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(m) +
                       ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, static_cast<double>(logits.at(b, j)));
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      e[j] = std::exp(static_cast<double>(logits.at(b, j)) - mx);
      sum += e[j];
    }
    total += std::log(sum) + mx - static_cast<double>(logits.at(b, static_cast<std::size_t>(y)));
    for (std::size_t j = 0; j < m; ++j) {
      const double p = e[j] / sum;
      r.probs.at(b, j) = static_cast<T>(p);
      r.grad_logits.at(b, j) = static_cast<T>((p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / double(B));
    }
  }
  r.loss = total / double(B);
  if (!std::isfinite(r.loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  return r;
}

template <typename T>
std::vector<std::int32_t> argmax_rows(const Tensor<T>& scores) {
  require_rank(scores.shape(), 2, "argmax_rows", "scores");
  std::vector<std::int32_t> out(scores.dim(0));
  for (std::size_t b = 0; b < scores.dim(0); ++b) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.dim(1); ++j) {
      if (scores.at(b, j) > scores.at(b, best)) best = j;
    }
    out[b] = static_cast<std::int32_t>(best);
  }
  return out;
}

#define PKGCN_INSTANTIATE_OPS(T)                                                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                              \
  template MatmulGrads<T> matmul_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                             \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);        \
  template PoolResult<T> maxpool2(const Tensor<T>&);                                                          \
  template Tensor<T> maxpool2_backward(const Tensor<T>&, std::span<const std::uint32_t>, const Shape&);        \
  template Tensor<T> relu(const Tensor<T>&);                                                                  \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                       \
  template CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);      \
  template std::vector<std::int32_t> argmax_rows(const Tensor<T>&);

PKGCN_INSTANTIATE_OPS(float)
PKGCN_INSTANTIATE_OPS(double)

}  // namespace pkgcn
