#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pkgcn/ops.hpp"
#include "pkgcn/tensor.hpp"

namespace pkgcn::verify {

struct SuiteResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

using ConvBackward = std::function<Conv2dGrads<double>(const Tensor<double>&, const Tensor<double>&,
                                                       const Tensor<double>&, bool)>;

struct VerifyOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double gradient_tolerance = 1e-5;
  /// Images [N x 1 x 28 x 28] for the degenerate-equivalence suite; random
  /// pixels are used when empty.
  Tensor<double> images;
  /// Swappable so a broken implementation can be shown to fail.
  ConvBackward conv_backward = [](const Tensor<double>& in, const Tensor<double>& k, const Tensor<double>& g,
                                  bool want) { return conv2d_backward(in, k, g, want); };
  std::size_t vgg_width_divisor = 16;
};

SuiteResult op_gradients(const VerifyOptions& options);
SuiteResult conv_gradients(const VerifyOptions& options);
SuiteResult model_gradients(const VerifyOptions& options);
SuiteResult pkgcn_v1_gradients(const VerifyOptions& options);
SuiteResult pkgcn_v2_gradients(const VerifyOptions& options);
SuiteResult vgg11_gradients(const VerifyOptions& options);

SuiteResult conv_oracle(const VerifyOptions& options);
SuiteResult confusion_oracle(const VerifyOptions& options);
SuiteResult kipf_oracle(const VerifyOptions& options);
SuiteResult adadelta_oracle(const VerifyOptions& options);

/// With A_hat = I, W = I and identity activation the first head scores
/// 2 * (C d); checks logits and argmax against the base model without bias.
SuiteResult degenerate_equivalence(const VerifyOptions& options);

std::vector<SuiteResult> run_all(const VerifyOptions& options, std::ostream* log = nullptr);

std::string format_result(const SuiteResult& result);

/// Loads `count` test images from an MNIST directory if present.
std::optional<Tensor<double>> load_mnist_sample(const std::string& dir, std::size_t count, std::uint64_t seed);

}  // namespace pkgcn::verify
