#pragma once

#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"

namespace echo2mri::evaluation {

/// Positive class is "synthetic" (label 1), negative is "original" (0).
struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix build_confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.empty()) throw InputError("confusion matrix needs at least one label");
  if (truth.size() != predicted.size()) {
    throw InputError("truth has " + std::to_string(truth.size()) + " labels, predicted has " +
                     std::to_string(predicted.size()));
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) throw InputError("labels must be 0 or 1");
    if (t == 1) (p == 1 ? cm.tp : cm.fn)++;
    else (p == 1 ? cm.fp : cm.tn)++;
  }
  return cm;
}

/// Every ratio with a possibly-zero denominator is optional; nullopt means
/// undefined for this matrix.
struct MetricSet {
  double accuracy = 0.0;
  std::optional<double> precision, recall, specificity, f1, mcc, fpr;
};

namespace detail {
inline std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

inline MetricSet compute_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.fn < 0 || cm.tn < 0) throw InputError("confusion cells must be non-negative");
  if (cm.total() == 0) throw InputError("confusion matrix is empty");
  MetricSet m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  m.precision = detail::ratio(cm.tp, cm.tp + cm.fp);
  m.recall = detail::ratio(cm.tp, cm.tp + cm.fn);
  m.specificity = detail::ratio(cm.tn, cm.tn + cm.fp);
  m.fpr = detail::ratio(cm.fp, cm.fp + cm.tn);
  // Harmonic mean; undefined unless both inputs are defined and not both zero.
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  const long double a = cm.tp + cm.fp, b = cm.tp + cm.fn, c = cm.tn + cm.fp, d = cm.tn + cm.fn;
  const long double den = a * b * c * d;
  if (den > 0) {
    const long double num = static_cast<long double>(cm.tp) * cm.tn - static_cast<long double>(cm.fp) * cm.fn;
    m.mcc = static_cast<double>(num / std::sqrt(den));
  }
  return m;
}

/// Table I of the reference study, pooled over four raters.
inline constexpr ConfusionMatrix kReferenceConfusion{68, 129, 332, 271};

/// Published summary metrics that accompany kReferenceConfusion. They are not
/// consistent with its cells; see known_discrepancy().
struct PublishedMetrics {
  double accuracy = 0.47, precision = 0.45, recall = 0.33, specificity = 0.60, f1 = 0.38, mcc = -0.07, fpr = 0.40;
};

/// Describes where computed metrics on the reference matrix depart from the
/// published summary by more than `tol`. The published values are kept as
/// printed and never substituted.
inline nlohmann::json known_discrepancy(double tol = 0.005) {
  const auto m = compute_metrics(kReferenceConfusion);
  const PublishedMetrics p;
  nlohmann::json diffs = nlohmann::json::array();
  auto check = [&](const char* name, std::optional<double> computed, double published) {
    if (computed && std::abs(*computed - published) > tol) {
      diffs.push_back({{"metric", name}, {"computed", *computed}, {"published", published}});
    }
  };
  check("accuracy", m.accuracy, p.accuracy);
  check("precision", m.precision, p.precision);
  check("recall", m.recall, p.recall);
  check("specificity", m.specificity, p.specificity);
  check("f1", m.f1, p.f1);
  check("mcc", m.mcc, p.mcc);
  check("fpr", m.fpr, p.fpr);
  return {{"confusion_matrix", {{"tp", 68}, {"fp", 129}, {"fn", 332}, {"tn", 271}}},
          {"note",
           "the published summary metrics do not follow from the published confusion matrix; "
           "metrics here are computed from the cells"},
          {"differences", diffs}};
}

inline void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
  j = {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

inline void from_json(const nlohmann::json& j, ConfusionMatrix& cm) {
  cm.tp = j.at("tp").get<std::int64_t>();
  cm.fp = j.at("fp").get<std::int64_t>();
  cm.fn = j.at("fn").get<std::int64_t>();
  cm.tn = j.at("tn").get<std::int64_t>();
}

/// Undefined metrics serialize as the string "undefined".
inline void to_json(nlohmann::json& j, const MetricSet& m) {
  auto v = [](const std::optional<double>& x) -> nlohmann::json {
    return x ? nlohmann::json(*x) : nlohmann::json("undefined");
  };
  j = {{"accuracy", m.accuracy}, {"precision", v(m.precision)}, {"recall", v(m.recall)},
       {"specificity", v(m.specificity)}, {"f1", v(m.f1)}, {"mcc", v(m.mcc)}, {"fpr", v(m.fpr)}};
}

}  // namespace echo2mri::evaluation
