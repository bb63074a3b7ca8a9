#pragma once

#include <span>
#include <vector>

#include "pkgcn/tensor.hpp"

namespace pkgcn {

struct AdaDeltaOptions {
  double rho = 0.95;
  double epsilon = 1e-6;
  double learning_rate = 1.0;  // multiplier on the update, 1.0 is plain AdaDelta
};

/// AdaDelta accumulators E[g^2] and E[dx^2], one pair per parameter tensor.
template <typename T>
class AdaDelta {
 public:
  /// Throws ConfigError unless rho in (0,1), epsilon > 0, learning_rate > 0.
  AdaDelta(std::span<const Shape> parameter_shapes, AdaDeltaOptions options = {});

  /// Elementwise:
  ///   E[g^2]  <- rho E[g^2] + (1-rho) g^2
  ///   dx      <- -lr * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
  ///   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
  ///   x       <- x + dx
  void step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads);

  const AdaDeltaOptions& options() const noexcept { return options_; }
  const std::vector<Tensor<T>>& mean_sq_grad() const noexcept { return mean_sq_grad_; }
  const std::vector<Tensor<T>>& mean_sq_update() const noexcept { return mean_sq_update_; }

 private:
  AdaDeltaOptions options_;
  std::vector<Tensor<T>> mean_sq_grad_;
  std::vector<Tensor<T>> mean_sq_update_;
};

extern template class AdaDelta<float>;
extern template class AdaDelta<double>;

}  // namespace pkgcn
