#include "pkgcn/verify/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace pkgcn::oracle {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t r, std::size_t k,
                           std::size_t c) {
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * c + j];
      out[i * c + j] = s;
    }
  }
  return out;
}

std::vector<double> conv2d(const std::vector<double>& input, std::size_t batch, std::size_t channels, std::size_t h,
                           std::size_t w, const std::vector<double>& kernels, std::size_t filters, std::size_t kh,
                           std::size_t kw, const std::vector<double>& bias) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::vector<double> out(batch * filters * oh * ow);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < filters; ++f)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = bias[f];
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx)
                s += input[((b * channels + c) * h + y + dy) * w + x + dx] *
                     kernels[((f * channels + c) * kh + dy) * kw + dx];
          out[((b * filters + f) * oh + y) * ow + x] = s;
        }
  return out;
}

std::vector<double> maxpool2(const std::vector<double>& input, std::size_t planes, std::size_t h, std::size_t w) {
  std::vector<double> out(planes * (h / 2) * (w / 2));
  std::size_t k = 0;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; y += 2)
      for (std::size_t x = 0; x < w; x += 2) {
        const double* base = &input[(p * h + y) * w + x];
        out[k++] = std::max(std::max(base[0], base[1]), std::max(base[w], base[w + 1]));
      }
  return out;
}

std::vector<std::uint64_t> confusion(const std::vector<std::int32_t>& truth, const std::vector<std::int32_t>& predicted,
                                     std::size_t m) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("oracle::confusion: length mismatch");
  std::vector<std::uint64_t> out(m * m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < truth.size(); ++k)
        if (truth[k] == static_cast<std::int32_t>(i) && predicted[k] == static_cast<std::int32_t>(j)) ++out[i * m + j];
  return out;
}

std::vector<double> kipf(const std::vector<double>& a, std::size_t m) {
  std::vector<double> tilde(a);
  for (std::size_t i = 0; i < m; ++i) tilde[i * m + i] += 1.0;
  std::vector<double> d(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < m; ++j) deg += tilde[i * m + j];
    d[i * m + i] = 1.0 / std::sqrt(deg);
  }
  return matmul(matmul(d, tilde, m, m, m), d, m, m, m);
}

std::vector<double> adadelta_trace(double x0, const std::vector<double>& grads, double rho, double eps, double lr) {
  std::vector<double> trace;
  double x = x0, eg = 0.0, edx = 0.0;
  for (double g : grads) {
    eg = rho * eg + (1.0 - rho) * g * g;
    const double dx = -lr * std::sqrt(edx + eps) / std::sqrt(eg + eps) * g;
    edx = rho * edx + (1.0 - rho) * dx * dx;
    x += dx;
    trace.push_back(x);
  }
  return trace;
}

double cross_entropy(const std::vector<double>& logits, const std::vector<std::int32_t>& labels, std::size_t m) {
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(logits[b * m + j]);
    total += std::log(z) - logits[b * m + labels[b]];
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace pkgcn::oracle
