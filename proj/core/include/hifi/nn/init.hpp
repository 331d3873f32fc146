#pragma once

#include "hifi/common.hpp"
#include "hifi/nn/tensor.hpp"

namespace hifi::nn {

/// Leaf parameter with U(-bound, bound) entries drawn from rng.
template <typename T>
Tensor<T> uniform_param(std::vector<int> shape, double bound, Rng& rng, std::string name) {
  auto t = Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_name(std::move(name));
  return t;
}

/// Kaiming-uniform fan-in init for a [Co,Ci,k,k] conv kernel.
template <typename T>
Tensor<T> kaiming_conv_param(int co, int ci, int k, Rng& rng, std::string name) {
  double fan_in = static_cast<double>(ci) * k * k;
  double bound = std::sqrt(6.0 / fan_in);
  return uniform_param<T>({co, ci, k, k}, bound, rng, std::move(name));
}

template <typename T>
Tensor<T> zero_param(std::vector<int> shape, std::string name) {
  auto t = Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true);
  t.set_name(std::move(name));
  return t;
}

}  // namespace hifi::nn
