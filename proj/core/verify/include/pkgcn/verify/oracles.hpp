#pragma once

// Naive reference implementations. Nothing here calls into pkgcn_core; the
// loops follow the textbook definitions so they can judge the fast paths.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pkgcn::oracle {

/// a [r x k] times b [k x c], row-major.
std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t r, std::size_t k,
                           std::size_t c);

/// Six nested loops over (b, f, y, x, ch, ky, kx); valid padding, stride 1.
std::vector<double> conv2d(const std::vector<double>& input, std::size_t batch, std::size_t channels, std::size_t h,
                           std::size_t w, const std::vector<double>& kernels, std::size_t filters, std::size_t kh,
                           std::size_t kw, const std::vector<double>& bias);

std::vector<double> maxpool2(const std::vector<double>& input, std::size_t planes, std::size_t h, std::size_t w);

/// Counts by scanning every (i, j) cell against the whole pair list.
std::vector<std::uint64_t> confusion(const std::vector<std::int32_t>& truth, const std::vector<std::int32_t>& predicted,
                                     std::size_t m);

/// Builds A + I, the diagonal D^-1/2 as a full matrix, and multiplies densely.
std::vector<double> kipf(const std::vector<double>& a, std::size_t m);

/// x_t for t = 1..steps under the scalar AdaDelta recurrence.
std::vector<double> adadelta_trace(double x0, const std::vector<double>& grads, double rho, double eps, double lr);

/// Mean softmax cross-entropy of logits [b x m].
double cross_entropy(const std::vector<double>& logits, const std::vector<std::int32_t>& labels, std::size_t m);

}  // namespace pkgcn::oracle
