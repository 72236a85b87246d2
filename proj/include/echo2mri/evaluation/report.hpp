#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "echo2mri/evaluation/metrics.hpp"
#include "echo2mri/evaluation/preferences.hpp"
#include "echo2mri/study/schema.hpp"

namespace echo2mri::evaluation {

struct ExportFile {
  std::vector<nlohmann::json> headers;
  std::vector<study::ExportRecord> records;
};

/// Parses study export JSONL: "header" lines and "response" lines. Blank
/// lines are ignored.
inline ExportFile read_export(std::istream& in, const std::string& source = "<stream>") {
  ExportFile out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": not JSON: " + e.what());
    }
    const auto kind = j.value("record", std::string("response"));
    if (kind == "header") {
      out.headers.push_back(j);
    } else if (kind == "response") {
      try {
        out.records.push_back(j.get<study::ExportRecord>());
      } catch (const Error& e) {
        throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
      }
    } else {
      throw InputError(source + ":" + std::to_string(lineno) + ": unknown record type '" + kind + "'");
    }
  }
  return out;
}

inline ExportFile read_export(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open responses file '" + path + "'");
  return read_export(in, path);
}

struct ConfusionSummary {
  ConfusionMatrix pooled;
  std::map<std::string, ConfusionMatrix> per_rater;
  long omitted = 0;
};

struct PreferenceSummary {
  PreferenceTable table;
  std::map<std::string, PreferenceTable> per_rater;
  long alongside_asked = 0;  ///< rwma: responses choosing "echo"
  long alongside_yes = 0;
};

struct EvaluationReport {
  bool complete = true;
  std::vector<nlohmann::json> sources;
  std::optional<ConfusionSummary> confusion;
  std::optional<PreferenceSummary> rwma;
  std::optional<PreferenceSummary> quality;
};

namespace detail {

inline int confusion_label(const std::string& s, const std::string& what) {
  if (s == "synthetic") return 1;
  if (s == "original") return 0;
  throw InputError(what + " must be synthetic or original, got '" + s + "'");
}

inline PreferenceSummary summarize_preferences(const std::vector<const study::ExportRecord*>& recs,
                                               study::StudyType type) {
  const auto& opts = study::choices(type);
  std::vector<std::string> all;
  std::map<std::string, std::vector<std::string>> by_rater;
  PreferenceSummary s;
  for (const auto* r : recs) {
    const std::string c = r->omitted ? std::string() : r->choice.value_or("");
    if (!r->omitted && c.empty()) throw InputError("response for item '" + r->item_id + "' has no choice");
    all.push_back(c);
    by_rater[r->rater_id].push_back(c);
    if (type == study::StudyType::rwma && c == "echo") {
      ++s.alongside_asked;
      s.alongside_yes += r->alongside.value_or(false);
    }
  }
  s.table = aggregate_preferences(all, opts);
  for (const auto& [rater, v] : by_rater) s.per_rater[rater] = aggregate_preferences(v, opts);
  return s;
}

}  // namespace detail

inline EvaluationReport build_report(const std::vector<ExportFile>& files) {
  EvaluationReport rep;
  std::vector<const study::ExportRecord*> conf, rwma, quality;
  for (const auto& f : files) {
    for (const auto& h : f.headers) {
      rep.sources.push_back(h);
      if (!h.value("complete", true)) rep.complete = false;
    }
    for (const auto& r : f.records) {
      switch (r.study_type) {
        case study::StudyType::confusion: conf.push_back(&r); break;
        case study::StudyType::rwma: rwma.push_back(&r); break;
        case study::StudyType::quality: quality.push_back(&r); break;
      }
    }
  }
  if (!conf.empty()) {
    ConfusionSummary s;
    for (const auto* r : conf) {
      if (r->omitted) {
        ++s.omitted;
        continue;
      }
      const int truth = detail::confusion_label(r->provenance.value("label", std::string()), "provenance.label");
      const int pred = detail::confusion_label(r->choice.value_or(""), "choice");
      const auto cm = build_confusion_matrix({truth}, {pred});
      s.pooled += cm;
      s.per_rater[r->rater_id] += cm;
    }
    rep.confusion = s;
  }
  if (!rwma.empty()) rep.rwma = detail::summarize_preferences(rwma, study::StudyType::rwma);
  if (!quality.empty()) rep.quality = detail::summarize_preferences(quality, study::StudyType::quality);
  return rep;
}

namespace detail {
inline nlohmann::json cm_block(const ConfusionMatrix& cm) {
  nlohmann::json j = {{"confusion_matrix", cm}, {"responses", cm.total()}};
  j["metrics"] = cm.total() > 0 ? nlohmann::json(compute_metrics(cm)) : nlohmann::json("undefined");
  return j;
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const EvaluationReport& r) {
  j = {{"schema_version", study::kSchemaVersion}, {"complete", r.complete}, {"sources", r.sources}};
  if (r.confusion) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [rater, cm] : r.confusion->per_rater) per[rater] = detail::cm_block(cm);
    j["confusion"] = {{"pooled", detail::cm_block(r.confusion->pooled)},
                      {"per_rater", per},
                      {"omitted", r.confusion->omitted}};
  }
  auto pref = [](const PreferenceSummary& s) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [rater, t] : s.per_rater) per[rater] = t;
    return nlohmann::json{{"table", s.table}, {"per_rater", per}};
  };
  if (r.rwma) {
    auto b = pref(*r.rwma);
    const auto& s = *r.rwma;
    b["alongside"] = {{"asked", s.alongside_asked},
                      {"yes", s.alongside_yes},
                      {"percent", s.alongside_asked ? nlohmann::json(100.0 * s.alongside_yes / s.alongside_asked)
                                                    : nlohmann::json("undefined")}};
    // Synthetic view judged at least as useful, or wanted alongside echo.
    const long useful = s.table.counts[1] + s.table.counts[2] + s.alongside_yes;
    b["synthetic_useful_percent"] =
        s.table.total ? nlohmann::json(100.0 * useful / s.table.total) : nlohmann::json("undefined");
    j["rwma"] = b;
  }
  if (r.quality) {
    auto b = pref(*r.quality);
    const auto& t = r.quality->table;
    b["better_or_similar_percent"] = t.total ? nlohmann::json(t.percentages[0] + t.percentages[1])
                                             : nlohmann::json("undefined");
    j["quality"] = b;
  }
}

namespace detail {
inline std::string fmt(const std::optional<double>& v, int decimals) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

inline void render_table(std::ostream& os, const PreferenceTable& t, const std::vector<std::string>& labels,
                         int decimals) {
  os << "  ";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    os << (i ? " | " : "") << labels[i] << " " << fmt(t.percentages[i], decimals) << "% (" << t.counts[i] << ")";
  }
  os << "\n";
}
}  // namespace detail

/// Plain-text rendering of the report tables.
inline std::string render_text(const EvaluationReport& r) {
  std::ostringstream os;
  if (!r.complete) os << "WARNING: at least one export is incomplete\n\n";
  if (r.confusion) {
    const auto& cm = r.confusion->pooled;
    os << "Confusion test: " << cm.total() << " responses, " << r.confusion->omitted << " omitted, "
       << r.confusion->per_rater.size() << " raters\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "                actual 1  actual 0\n  predicted 1 %10lld%10lld\n"
                                   "  predicted 0 %10lld%10lld\n",
                  static_cast<long long>(cm.tp), static_cast<long long>(cm.fp), static_cast<long long>(cm.fn),
                  static_cast<long long>(cm.tn));
    os << buf;
    if (cm.total() > 0) {
      const auto m = compute_metrics(cm);
      os << "  accuracy " << detail::fmt(m.accuracy, 4) << "  precision " << detail::fmt(m.precision, 4)
         << "  recall " << detail::fmt(m.recall, 4) << "  specificity " << detail::fmt(m.specificity, 4)
         << "\n  f1 " << detail::fmt(m.f1, 4) << "  mcc " << detail::fmt(m.mcc, 4) << "  fpr "
         << detail::fmt(m.fpr, 4) << "\n";
    }
    os << "\n";
  }
  if (r.rwma) {
    const auto& s = *r.rwma;
    os << "RWMA preference: " << s.table.total << " counted, " << s.table.omitted << " omitted\n";
    detail::render_table(os, s.table, {"Echocardiography", "Synthetic MRI", "Both"}, 1);
    if (s.alongside_asked) {
      os << "  synthetic wanted alongside echo: " << detail::fmt(100.0 * s.alongside_yes / s.alongside_asked, 1)
         << "% (" << s.alongside_yes << "/" << s.alongside_asked << ")\n";
    }
    os << "\n";
  }
  if (r.quality) {
    const auto& s = *r.quality;
    os << "Quality: " << s.table.total << " counted, " << s.table.omitted << " omitted\n";
    detail::render_table(os, s.table, {"Better", "Similar", "Worse"}, 2);
    os << "\n";
  }
  return os.str();
}

}  // namespace echo2mri::evaluation
