#pragma once

#include <optional>

#include "echo2mri/nn/conv2d.hpp"
#include "echo2mri/nn/layers.hpp"

namespace echo2mri::models {

/// conv -> [instance norm] -> activation.
template <typename T, template <class> class Conv>
class ConvUnit {
 public:
  struct Cache {
    typename Conv<T>::Cache conv;
    typename nn::InstanceNorm<T>::Cache norm;
    Tensor<T> output;
  };

  ConvUnit() = default;
  ConvUnit(Conv<T> conv, bool normalize, nn::Activation act, const std::string& name)
      : conv_(std::move(conv)), act_(act) {
    if (normalize) norm_.emplace(name + ".norm", conv_.options().out_channels);
  }

  Conv<T>& conv() noexcept { return conv_; }
  const Conv<T>& conv() const noexcept { return conv_; }
  bool normalized() const noexcept { return norm_.has_value(); }

  nn::ParameterList<T> parameters() {
    auto out = conv_.parameters();
    if (norm_) {
      auto p = norm_->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  Shape output_shape(Shape in) const { return conv_.output_shape(in); }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Tensor<T> y = conv_.forward(x, cache ? &cache->conv : nullptr);
    if (norm_) y = norm_->forward(y, cache ? &cache->norm : nullptr);
    nn::activate_inplace(y, act_);
    if (cache) cache->output = y;
    return y;
  }

  Tensor<T> backward(const Cache& cache, Tensor<T> grad, bool input_grad = true) {
    nn::activation_backward_inplace(grad, cache.output, act_);
    if (norm_) grad = norm_->backward(cache.norm, grad);
    return conv_.backward(cache.conv, grad, input_grad);
  }

 private:
  Conv<T> conv_;
  std::optional<nn::InstanceNorm<T>> norm_;
  nn::Activation act_ = nn::Activation::none;
};

/// Two reflection-padded 3x3 conv units with an identity skip.
template <typename T>
class ResidualBlock {
 public:
  using Unit = ConvUnit<T, nn::Conv2d>;
  struct Cache {
    typename Unit::Cache first;
    typename Unit::Cache second;
  };

  ResidualBlock() = default;
  ResidualBlock(int width, const std::string& name) {
    nn::Conv2dOptions opt{width, width, 3, 1, nn::Padding::uniform(1), nn::PadMode::reflect, false};
    first_ = Unit(nn::Conv2d<T>(name + ".conv1", opt), true, nn::Activation::relu, name + ".1");
    second_ = Unit(nn::Conv2d<T>(name + ".conv2", opt), true, nn::Activation::none, name + ".2");
  }

  Unit& first() noexcept { return first_; }
  Unit& second() noexcept { return second_; }

  nn::ParameterList<T> parameters() {
    auto out = first_.parameters();
    auto p = second_.parameters();
    out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Tensor<T> inner = first_.forward(x, cache ? &cache->first : nullptr);
    Tensor<T> y = second_.forward(inner, cache ? &cache->second : nullptr);
    y += x;
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad) {
    Tensor<T> g = second_.backward(cache.second, grad);
    g = first_.backward(cache.first, std::move(g));
    g += grad;
    return g;
  }

 private:
  Unit first_;
  Unit second_;
};

}  // namespace echo2mri::models
