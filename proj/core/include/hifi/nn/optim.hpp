#pragma once

#include "hifi/nn/tensor.hpp"

namespace hifi::nn {

/// AdamW with decoupled weight decay: p *= (1 - lr*wd), then the Adam step.
/// Parameters with no allocated gradient are treated as zero-gradient.
template <typename T>
class AdamW {
 public:
  struct Options {
    T lr = T(0.002);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0.01);
  };

  AdamW(std::vector<Tensor<T>> params, Options opt)
      : params_(std::move(params)), opt_(opt) {
    state_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      state_[i].m.assign(params_[i].numel(), T(0));
      state_[i].v.assign(params_[i].numel(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    T bc1 = T(1) - std::pow(opt_.beta1, static_cast<T>(t_));
    T bc2 = T(1) - std::pow(opt_.beta2, static_cast<T>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      auto& st = state_[i];
      T* pv = p.data();
      const bool has_g = p.has_grad();
      const T* g = has_g ? p.grad_values().data() : nullptr;
      for (std::size_t j = 0; j < p.numel(); ++j) {
        T gj = has_g ? g[j] : T(0);
        st.m[j] = opt_.beta1 * st.m[j] + (T(1) - opt_.beta1) * gj;
        st.v[j] = opt_.beta2 * st.v[j] + (T(1) - opt_.beta2) * gj * gj;
        pv[j] *= (T(1) - opt_.lr * opt_.weight_decay);
        T mhat = st.m[j] / bc1;
        T vhat = st.v[j] / bc2;
        pv[j] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
      }
    }
  }

  void set_lr(T lr) { opt_.lr = lr; }
  T lr() const { return opt_.lr; }
  long step_count() const { return t_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

  /// Moment vectors exposed for checkpointing.
  std::vector<T>& moment1(std::size_t i) { return state_[i].m; }
  std::vector<T>& moment2(std::size_t i) { return state_[i].v; }
  void set_step_count(long t) { t_ = t; }

 private:
  struct State {
    std::vector<T> m, v;
  };
  std::vector<Tensor<T>> params_;
  std::vector<State> state_;
  Options opt_;
  long t_ = 0;
};

}  // namespace hifi::nn
