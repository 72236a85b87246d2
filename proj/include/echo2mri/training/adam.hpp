#pragma once

#include <cmath>
#include <vector>

#include "echo2mri/nn/parameter.hpp"

namespace echo2mri::training {

/// Adam over a fixed list of parameters. The learning rate is supplied per
/// step so the caller owns the schedule.
template <typename T>
class Adam {
 public:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };

  Adam() = default;
  Adam(nn::ParameterList<T> params, double beta1, double beta2, double eps)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) moments_.push_back({std::vector<T>(p->size()), std::vector<T>(p->size())});
  }

  void zero_grad() { nn::zero_grads(params_); }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& [m, v] = moments_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        p.value[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  long steps() const noexcept { return t_; }
  void set_steps(long t) noexcept { t_ = t; }
  double beta1() const noexcept { return beta1_; }
  double beta2() const noexcept { return beta2_; }
  double eps() const noexcept { return eps_; }
  std::vector<Moments>& moments() noexcept { return moments_; }
  const std::vector<Moments>& moments() const noexcept { return moments_; }
  const nn::ParameterList<T>& parameters() const noexcept { return params_; }

 private:
  nn::ParameterList<T> params_;
  std::vector<Moments> moments_;
  double beta1_ = 0.5;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace echo2mri::training
