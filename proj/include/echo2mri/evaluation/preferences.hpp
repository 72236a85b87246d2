#pragma once

#include <algorithm>
#include <json.hpp>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"

namespace echo2mri::evaluation {

struct PreferenceTable {
  std::vector<std::string> options;
  std::vector<long> counts;
  std::vector<double> percentages;  ///< of counted responses; unrounded
  long total = 0;                   ///< responses counted
  long omitted = 0;                 ///< excluded, reported separately
};

/// One response per entry; an empty string marks an omitted evaluation.
inline PreferenceTable aggregate_preferences(const std::vector<std::string>& responses,
                                             const std::vector<std::string>& options) {
  if (options.empty()) throw InputError("option set is empty");
  PreferenceTable t;
  t.options = options;
  t.counts.assign(options.size(), 0);
  for (const auto& r : responses) {
    if (r.empty()) {
      ++t.omitted;
      continue;
    }
    const auto it = std::find(options.begin(), options.end(), r);
    if (it == options.end()) throw InputError("unknown response category '" + r + "'");
    ++t.counts[it - options.begin()];
    ++t.total;
  }
  t.percentages.assign(options.size(), 0.0);
  if (t.total > 0) {
    for (std::size_t i = 0; i < options.size(); ++i) t.percentages[i] = 100.0 * t.counts[i] / t.total;
  }
  return t;
}

inline double percentage_of(const PreferenceTable& t, const std::string& option) {
  const auto it = std::find(t.options.begin(), t.options.end(), option);
  if (it == t.options.end()) throw InputError("unknown option '" + option + "'");
  return t.percentages[it - t.options.begin()];
}

inline void to_json(nlohmann::json& j, const PreferenceTable& t) {
  j = nlohmann::json::object();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.options.size(); ++i) {
    rows.push_back({{"option", t.options[i]}, {"count", t.counts[i]}, {"percent", t.percentages[i]}});
  }
  j["rows"] = rows;
  j["total"] = t.total;
  j["omitted"] = t.omitted;
}

}  // namespace echo2mri::evaluation
