#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "structvec/rng.hpp"
#include "structvec/tensor.hpp"

namespace structvec {

struct MissingGradError : std::runtime_error {
  explicit MissingGradError(const std::string& name)
      : std::runtime_error("missing or mismatched gradient for parameter " +
                           name),
        name(name) {}
  std::string name;
};

// Entries i.i.d. uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                         Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  for (auto& x : out.data) x = static_cast<T>(rng.uniform(-bound, bound));
  return out;
}

template <typename T>
Tensor<T> uniform_init(Shape shape, double lo, double hi, Rng& rng) {
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  for (auto& x : out.data) x = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

// Adam with bias correction. step() applies one update to every registered
// parameter and zeroes its gradient.
template <typename T>
class Adam {
 public:
  struct Config {
    T lr = T(5e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
  };

  Adam() = default;
  Adam(std::vector<Param<T>*> params, Config cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(Tensor<T>::zeros(p->value.shape));
      v_.push_back(Tensor<T>::zeros(p->value.shape));
    }
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Param<T>& p = *params_[pi];
      if (!p.grad.same_shape(p.value)) throw MissingGradError(p.name);
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < p.value.numel(); ++i) {
        const T g = p.grad.data[i];
        m.data[i] = cfg_.beta1 * m.data[i] + (T(1) - cfg_.beta1) * g;
        v.data[i] = cfg_.beta2 * v.data[i] + (T(1) - cfg_.beta2) * g * g;
        const T mhat = m.data[i] / bc1;
        const T vhat = v.data[i] / bc2;
        p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      p.zero_grad();
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  const Config& config() const { return cfg_; }
  void set_lr(T lr) { cfg_.lr = lr; }

  std::size_t param_count() const { return params_.size(); }
  const Param<T>& param(std::size_t i) const { return *params_[i]; }
  Tensor<T>& moment1(std::size_t i) { return m_[i]; }
  Tensor<T>& moment2(std::size_t i) { return v_[i]; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  Config cfg_;
  std::int64_t t_ = 0;
};

}  // namespace structvec
