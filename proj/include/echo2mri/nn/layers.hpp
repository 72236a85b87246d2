#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "echo2mri/nn/parameter.hpp"
#include "echo2mri/tensor.hpp"

namespace echo2mri::nn {

/// Per-sample, per-channel normalization with learnable scale and shift.
template <typename T>
class InstanceNorm {
 public:
  struct Cache {
    Tensor<T> normalized;
    std::vector<T> inv_std;
  };

  InstanceNorm() = default;
  InstanceNorm(const std::string& name, int channels, double eps = 1e-5)
      : eps_(eps), gamma_(name + ".gamma", {channels}, T(1)), beta_(name + ".beta", {channels}) {}

  int channels() const noexcept { return static_cast<int>(gamma_.size()); }
  ParameterList<T> parameters() { return {&gamma_, &beta_}; }
  Parameter<T>& gamma() noexcept { return gamma_; }
  Parameter<T>& beta() noexcept { return beta_; }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    if (x.channels() != channels()) {
      throw ShapeError("instance norm expects " + std::to_string(channels()) + " channels, got " +
                       x.shape().str());
    }
    Tensor<T> out(x.shape());
    const std::size_t n = x.shape().plane();
    if (cache) {
      cache->normalized = Tensor<T>(x.shape());
      cache->inv_std.assign(x.channels(), T(0));
    }
    for (int c = 0; c < x.channels(); ++c) {
      const T* in = x.channel(c);
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += in[i];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = in[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(n);
      const T inv_std = static_cast<T>(1.0 / std::sqrt(var + eps_));
      const T m = static_cast<T>(mean);
      T* o = out.channel(c);
      T* xhat = cache ? cache->normalized.channel(c) : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T h = (in[i] - m) * inv_std;
        if (xhat) xhat[i] = h;
        o[i] = gamma_.value[c] * h + beta_.value[c];
      }
      if (cache) cache->inv_std[c] = inv_std;
    }
    return out;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out) {
    Tensor<T> gx(grad_out.shape());
    const std::size_t n = grad_out.shape().plane();
    for (int c = 0; c < grad_out.channels(); ++c) {
      const T* g = grad_out.channel(c);
      const T* xhat = cache.normalized.channel(c);
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += g[i];
        sum_gx += static_cast<double>(g[i]) * xhat[i];
      }
      gamma_.grad[c] += static_cast<T>(sum_gx);
      beta_.grad[c] += static_cast<T>(sum_g);
      const double gam = gamma_.value[c];
      const double scale = gam * cache.inv_std[c] / static_cast<double>(n);
      const double mean_g = sum_g, mean_gx = sum_gx;
      T* o = gx.channel(c);
      for (std::size_t i = 0; i < n; ++i) {
        o[i] = static_cast<T>(scale * (static_cast<double>(n) * g[i] - mean_g - xhat[i] * mean_gx));
      }
    }
    return gx;
  }

 private:
  double eps_ = 1e-5;
  Parameter<T> gamma_;
  Parameter<T> beta_;
};

enum class Activation { none, relu, leaky_relu, tanh };

inline constexpr double kLeakySlope = 0.2;

template <typename T>
void activate_inplace(Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::none:
      return;
    case Activation::relu:
      for (auto& v : x.values()) v = v > T(0) ? v : T(0);
      return;
    case Activation::leaky_relu:
      for (auto& v : x.values()) v = v > T(0) ? v : static_cast<T>(kLeakySlope) * v;
      return;
    case Activation::tanh:
      for (auto& v : x.values()) v = std::tanh(v);
      return;
  }
}

/// Gradient through an activation given its *output*; all supported
/// activations are recoverable from the output alone.
template <typename T>
void activation_backward_inplace(Tensor<T>& grad, const Tensor<T>& output, Activation a) {
  auto g = grad.values();
  auto y = output.values();
  switch (a) {
    case Activation::none:
      return;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > T(0))) g[i] = T(0);
      return;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > T(0))) g[i] *= static_cast<T>(kLeakySlope);
      return;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(1) - y[i] * y[i];
      return;
  }
}

}  // namespace echo2mri::nn
