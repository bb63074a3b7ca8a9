#include "pkgcn/optim.hpp"

#include <cmath>
#include <string>

namespace pkgcn {

template <typename T>
AdaDelta<T>::AdaDelta(std::span<const Shape> parameter_shapes, AdaDeltaOptions options) : options_(options) {
  if (!(options.rho > 0.0 && options.rho < 1.0)) throw ConfigError("adadelta: rho must lie in (0, 1)");
  if (!(options.epsilon > 0.0)) throw ConfigError("adadelta: epsilon must be positive");
  if (!(options.learning_rate > 0.0)) throw ConfigError("adadelta: learning rate must be positive");
  for (const auto& s : parameter_shapes) {
    mean_sq_grad_.emplace_back(s);
    mean_sq_update_.emplace_back(s);
  }
}

template <typename T>
void AdaDelta<T>::step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
  if (params.size() != mean_sq_grad_.size() || grads.size() != mean_sq_grad_.size()) {
    throw ShapeError("adadelta: expected " + std::to_string(mean_sq_grad_.size()) + " tensors, got " +
                     std::to_string(params.size()) + " params / " + std::to_string(grads.size()) + " grads");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    require_same_shape(params[k]->shape(), mean_sq_grad_[k].shape(), "adadelta param");
    require_same_shape(grads[k].shape(), mean_sq_grad_[k].shape(), "adadelta grad");
    grads[k].require_finite("adadelta gradient " + std::to_string(k));
  }
  const T rho = static_cast<T>(options_.rho);
  const T one_minus_rho = static_cast<T>(1.0 - options_.rho);
  const T eps = static_cast<T>(options_.epsilon);
  const T lr = static_cast<T>(options_.learning_rate);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    T* __restrict x = params[k]->data().data();
    const T* __restrict g = grads[k].data().data();
    T* __restrict eg = mean_sq_grad_[k].data().data();
    T* __restrict ed = mean_sq_update_[k].data().data();
    const std::size_t n = grads[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      eg[i] = rho * eg[i] + one_minus_rho * g[i] * g[i];
      const T dx = -lr * std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
      ed[i] = rho * ed[i] + one_minus_rho * dx * dx;
      x[i] += dx;
    }
  }
}

template class AdaDelta<float>;
template class AdaDelta<double>;

}  // namespace pkgcn
