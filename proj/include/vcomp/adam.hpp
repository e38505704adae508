#pragma once

#include <cmath>

#include "vcomp/layers.hpp"

namespace vcomp {

// ADAM with bias correction; the learning rate halves every 20 epochs.
template <typename T>
class AdamState {
 public:
  T lr0 = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  int halve_every = 20;  // epochs per halving

  AdamState() = default;
  AdamState(const std::vector<ParamView<T>>& views, T lr = T(1e-3)) : lr0(lr) {
    size_t total = 0;
    for (const auto& v : views) total += v.size;
    m_.assign(total, T(0));
    v_.assign(total, T(0));
  }

  void set_epoch(int epoch) { epoch_ = epoch; }
  int epoch() const { return epoch_; }
  long step_count() const { return step_; }

  T lr() const { return lr0 * T(std::pow(0.5, double(epoch_ / halve_every))); }

  void step(const std::vector<ParamView<T>>& views) {
    ++step_;
    T rate = lr();
    T bc1 = T(1) - T(std::pow(double(beta1), double(step_)));
    T bc2 = T(1) - T(std::pow(double(beta2), double(step_)));
    size_t offset = 0;
    for (const auto& view : views) {
      for (size_t i = 0; i < view.size; ++i) {
        size_t j = offset + i;
        T g = view.grad[i];
        m_[j] = beta1 * m_[j] + (T(1) - beta1) * g;
        v_[j] = beta2 * v_[j] + (T(1) - beta2) * g * g;
        T mhat = m_[j] / bc1;
        T vhat = v_[j] / bc2;
        view.param[i] -= rate * mhat / (std::sqrt(vhat) + eps);
      }
      offset += view.size;
    }
  }

 private:
  std::vector<T> m_, v_;
  long step_ = 0;
  int epoch_ = 0;
};

}  // namespace vcomp
