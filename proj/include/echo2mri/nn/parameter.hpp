#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace echo2mri::nn {

/// A trainable array with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> dims;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> d, T fill = T(0)) : name(std::move(n)), dims(std::move(d)) {
    std::size_t count = 1;
    for (int v : dims) count *= static_cast<std::size_t>(v);
    value.assign(count, fill);
    grad.assign(count, T(0));
  }

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
std::size_t count_scalars(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

template <typename T>
void zero_grads(const ParameterList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Zero-mean Gaussian fill, the initialization used for every convolution kernel.
template <typename T, typename Engine>
void gaussian_fill(Parameter<T>& p, double stddev, Engine& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : p.value) v = static_cast<T>(dist(rng));
}

}  // namespace echo2mri::nn
