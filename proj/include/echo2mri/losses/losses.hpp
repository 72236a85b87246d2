#pragma once

#include <cmath>
#include <json.hpp>
#include <utility>

#include "echo2mri/tensor.hpp"

// Least-squares adversarial and L1 cycle objectives. Every norm is taken as
// a per-element mean so that magnitudes do not depend on image or grid size.

namespace echo2mri::losses {

/// Components of one training step.
struct LossReport {
  double adv_G = 0.0;  ///< D_Y(G(x)) pushed towards 1
  double adv_F = 0.0;  ///< D_X(F(y)) pushed towards 1
  double cyc = 0.0;    ///< |F(G(x)) - x| + |G(F(y)) - y|
  double total_T = 0.0;
  double d1 = 0.0;  ///< D_Y: real y -> 1, G(x) -> 0
  double d2 = 0.0;  ///< D_X: real x -> 1, F(y) -> 0
  double lambda = 10.0;
  long step = 0;
  int epoch = 0;

  double total_D() const noexcept { return d1 + d2; }

  bool finite() const noexcept {
    return std::isfinite(adv_G) && std::isfinite(adv_F) && std::isfinite(cyc) &&
           std::isfinite(total_T) && std::isfinite(d1) && std::isfinite(d2);
  }

  /// total_T == adv_G + adv_F + lambda * cyc within `rel` relative error.
  bool recomposes(double rel = 1e-6) const noexcept {
    const double expected = adv_G + adv_F + lambda * cyc;
    return std::abs(total_T - expected) <= rel * std::max(1.0, std::abs(expected));
  }

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

inline void to_json(nlohmann::json& j, const LossReport& r) {
  j = {{"step", r.step}, {"epoch", r.epoch}, {"adv_G", r.adv_G}, {"adv_F", r.adv_F},
       {"cyc", r.cyc},   {"total_T", r.total_T}, {"d1", r.d1},   {"d2", r.d2},
       {"lambda", r.lambda}};
}

inline void from_json(const nlohmann::json& j, LossReport& r) {
  r.step = j.at("step").get<long>();
  r.epoch = j.at("epoch").get<int>();
  r.adv_G = j.at("adv_G").get<double>();
  r.adv_F = j.at("adv_F").get<double>();
  r.cyc = j.at("cyc").get<double>();
  r.total_T = j.at("total_T").get<double>();
  r.d1 = j.at("d1").get<double>();
  r.d2 = j.at("d2").get<double>();
  r.lambda = j.at("lambda").get<double>();
}

namespace detail {

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  for (T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string("non-finite value in ") + what);
    }
  }
}

}  // namespace detail

/// Mean of (g - target)^2 over the grid.
template <typename T>
double mean_squared_deviation(const Tensor<T>& grid, double target) {
  detail::require_finite(grid, "decision grid");
  if (grid.empty()) throw ShapeError("empty decision grid");
  double s = 0.0;
  for (T v : grid.values()) {
    const double d = static_cast<double>(v) - target;
    s += d * d;
  }
  return s / static_cast<double>(grid.size());
}

/// d/dg of mean_squared_deviation(g, target), scaled by `weight`.
template <typename T>
Tensor<T> mean_squared_deviation_grad(const Tensor<T>& grid, double target, double weight = 1.0) {
  Tensor<T> g(grid.shape());
  const double k = 2.0 * weight / static_cast<double>(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    g[i] = static_cast<T>(k * (static_cast<double>(grid[i]) - target));
  }
  return g;
}

template <typename T>
double mean_absolute_deviation(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "cycle-consistency loss");
  if (a.empty()) throw ShapeError("empty tensor in cycle-consistency loss");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  }
  return s / static_cast<double>(a.size());
}

/// d/da of mean_absolute_deviation(a, b) * weight; the subgradient at a == b is 0.
template <typename T>
Tensor<T> mean_absolute_deviation_grad(const Tensor<T>& a, const Tensor<T>& b, double weight = 1.0) {
  Tensor<T> g(a.shape());
  const T k = static_cast<T>(weight / static_cast<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    g[i] = a[i] > b[i] ? k : (a[i] < b[i] ? -k : T(0));
  }
  return g;
}

/// Generator-facing adversarial terms: (adv_G, adv_F) with every decision
/// pushed towards the "real" label 1.
template <typename T>
std::pair<double, double> adversarial_generator_loss(const Tensor<T>& dy_of_yhat,
                                                     const Tensor<T>& dx_of_xhat) {
  return {mean_squared_deviation(dy_of_yhat, 1.0), mean_squared_deviation(dx_of_xhat, 1.0)};
}

template <typename T>
double cycle_consistency_loss(const Tensor<T>& x, const Tensor<T>& x_tilde, const Tensor<T>& y,
                              const Tensor<T>& y_tilde) {
  return mean_absolute_deviation(x_tilde, x) + mean_absolute_deviation(y_tilde, y);
}

inline double total_generator_loss(double adv_G, double adv_F, double cyc, double lambda) {
  return adv_G + adv_F + lambda * cyc;
}

/// Real decisions pushed to 1, fake decisions to 0.
template <typename T>
double discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  d_real.require_same_shape(d_fake, "discriminator loss");
  return mean_squared_deviation(d_real, 1.0) + mean_squared_deviation(d_fake, 0.0);
}

}  // namespace echo2mri::losses
