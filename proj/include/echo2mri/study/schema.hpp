#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"

namespace echo2mri::study {

inline constexpr int kSchemaVersion = 1;

enum class StudyType { confusion, rwma, quality };

inline std::string to_string(StudyType t) {
  switch (t) {
    case StudyType::confusion: return "confusion";
    case StudyType::rwma: return "rwma";
    case StudyType::quality: return "quality";
  }
  return "?";
}

inline StudyType parse_study_type(const std::string& s) {
  if (s == "confusion") return StudyType::confusion;
  if (s == "rwma") return StudyType::rwma;
  if (s == "quality") return StudyType::quality;
  throw ValidationError("unknown study_type '" + s + "'");
}

/// Answer options offered to raters, in display order.
inline const std::vector<std::string>& choices(StudyType t) {
  static const std::vector<std::string> confusion{"synthetic", "original"};
  static const std::vector<std::string> rwma{"echo", "synthetic-mri", "both"};
  static const std::vector<std::string> quality{"better", "similar", "worse"};
  switch (t) {
    case StudyType::confusion: return confusion;
    case StudyType::rwma: return rwma;
    case StudyType::quality: return quality;
  }
  return confusion;
}

/// Media roles every item of a study type must carry.
inline const std::vector<std::string>& media_roles(StudyType t) {
  static const std::vector<std::string> confusion{"image"};
  static const std::vector<std::string> rwma{"echo", "synthetic"};
  static const std::vector<std::string> quality{"synthetic", "original"};
  switch (t) {
    case StudyType::confusion: return confusion;
    case StudyType::rwma: return rwma;
    case StudyType::quality: return quality;
  }
  return confusion;
}

/// `provenance` is hidden ground truth. For confusion studies it must hold
/// "label": "synthetic" | "original"; any further keys are kept and exported.
struct StudyItem {
  std::string item_id;
  std::map<std::string, std::string> media;  ///< role -> path under the media root
  nlohmann::json provenance = nlohmann::json::object();
};

struct StudyDefinition {
  StudyType study_type = StudyType::confusion;
  std::vector<StudyItem> items;
  int n_per_rater = 0;  ///< 0 serves every item
  std::uint64_t seed = 0;
  bool allow_unbalanced = false;

  int served_per_session() const { return n_per_rater > 0 ? n_per_rater : static_cast<int>(items.size()); }

  /// Structural checks only; media resolution is the service's job.
  void validate() const {
    if (items.empty()) throw ValidationError("study has no items");
    if (n_per_rater < 0 || n_per_rater > static_cast<int>(items.size())) {
      throw ValidationError("n_per_rater must be in [0, " + std::to_string(items.size()) + "]");
    }
    std::set<std::string> ids;
    long synthetic = 0, original = 0;
    const auto& roles = media_roles(study_type);
    for (const auto& it : items) {
      if (it.item_id.empty()) throw ValidationError("item_id must be non-empty");
      if (!ids.insert(it.item_id).second) throw ValidationError("duplicate item_id '" + it.item_id + "'");
      if (it.media.size() != roles.size() ||
          !std::all_of(roles.begin(), roles.end(), [&](const auto& r) { return it.media.count(r) == 1; })) {
        std::string want;
        for (const auto& r : roles) want += (want.empty() ? "" : ", ") + r;
        throw ValidationError("item '" + it.item_id + "' must have exactly the media roles {" + want + "}");
      }
      if (!it.provenance.is_object()) throw ValidationError("item '" + it.item_id + "': provenance must be an object");
      if (study_type == StudyType::confusion) {
        const auto label = it.provenance.value("label", std::string());
        if (label == "synthetic") ++synthetic;
        else if (label == "original") ++original;
        else throw ValidationError("item '" + it.item_id + "': provenance.label must be synthetic or original");
      }
    }
    if (study_type == StudyType::confusion && synthetic != original && !allow_unbalanced) {
      throw ValidationError("confusion study is unbalanced: " + std::to_string(synthetic) + " synthetic vs " +
                            std::to_string(original) + " original (set allow_unbalanced to override)");
    }
  }
};

/// A rater's submission for the current item. Either `omitted` is set, or
/// `choice` holds one of choices(type). `alongside` is required exactly when
/// an rwma rater picks "echo".
struct RaterResponse {
  std::string item;  ///< opaque item token from the payload
  std::optional<std::string> choice;
  std::optional<bool> alongside;
  bool omitted = false;
  std::string omit_reason;
  double latency_ms = 0.0;
  std::string timestamp;  ///< ISO-8601 UTC; server time when absent

  void validate(StudyType t) const {
    if (item.empty()) throw ValidationError("response must name the item token");
    if (!(latency_ms >= 0.0)) throw ValidationError("latency_ms must be >= 0");
    if (omitted) {
      if (choice || alongside) throw ValidationError("an omitted response carries no choice");
      return;
    }
    if (!choice) throw ValidationError("response needs a choice or omitted=true");
    const auto& opts = choices(t);
    if (std::find(opts.begin(), opts.end(), *choice) == opts.end()) {
      throw ValidationError("choice '" + *choice + "' is not valid for a " + to_string(t) + " study");
    }
    if (t == StudyType::rwma && *choice == "echo") {
      if (!alongside) throw ValidationError("choice 'echo' requires the alongside answer");
    } else if (alongside) {
      throw ValidationError("alongside is only asked when the rwma choice is 'echo'");
    }
  }
};

inline std::string utc_now_iso8601() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t tt = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[40];
  const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

// --- JSON ---------------------------------------------------------------

inline void to_json(nlohmann::json& j, const StudyItem& it) {
  j = {{"item_id", it.item_id}, {"media", it.media}, {"provenance", it.provenance}};
}

inline void from_json(const nlohmann::json& j, StudyItem& it) {
  try {
    it.item_id = j.at("item_id").get<std::string>();
    it.media = j.at("media").get<std::map<std::string, std::string>>();
    it.provenance = j.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed study item: ") + e.what());
  }
}

inline void to_json(nlohmann::json& j, const StudyDefinition& d) {
  j = {{"schema_version", kSchemaVersion}, {"study_type", to_string(d.study_type)},
       {"items", d.items},                 {"n_per_rater", d.n_per_rater},
       {"seed", d.seed},                   {"allow_unbalanced", d.allow_unbalanced}};
}

inline void from_json(const nlohmann::json& j, StudyDefinition& d) {
  if (!j.is_object()) throw ValidationError("study definition must be a JSON object");
  if (j.value("schema_version", kSchemaVersion) != kSchemaVersion) {
    throw ValidationError("unsupported schema_version");
  }
  try {
    d.study_type = parse_study_type(j.at("study_type").get<std::string>());
    d.items = j.at("items").get<std::vector<StudyItem>>();
    d.n_per_rater = j.value("n_per_rater", 0);
    d.seed = j.value("seed", std::uint64_t{0});
    d.allow_unbalanced = j.value("allow_unbalanced", false);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed study definition: ") + e.what());
  }
}

inline void to_json(nlohmann::json& j, const RaterResponse& r) {
  j = {{"item", r.item},
       {"omitted", r.omitted},
       {"latency_ms", r.latency_ms},
       {"timestamp", r.timestamp}};
  if (r.choice) j["choice"] = *r.choice;
  if (r.alongside) j["alongside"] = *r.alongside;
  if (r.omitted) j["omit_reason"] = r.omit_reason;
}

inline void from_json(const nlohmann::json& j, RaterResponse& r) {
  if (!j.is_object()) throw ValidationError("response must be a JSON object");
  try {
    r.item = j.at("item").get<std::string>();
    if (j.contains("choice") && !j["choice"].is_null()) r.choice = j["choice"].get<std::string>();
    if (j.contains("alongside") && !j["alongside"].is_null()) r.alongside = j["alongside"].get<bool>();
    r.omitted = j.value("omitted", false);
    r.omit_reason = j.value("omit_reason", std::string());
    r.latency_ms = j.value("latency_ms", 0.0);
    r.timestamp = j.value("timestamp", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed response: ") + e.what());
  }
}

/// One exported line per answered or omitted item, with provenance restored.
struct ExportRecord {
  std::string study_id;
  StudyType study_type = StudyType::confusion;
  std::string session_id;
  std::string rater_id;
  std::string item_id;
  int position = 0;
  nlohmann::json provenance = nlohmann::json::object();
  std::optional<std::string> choice;
  std::optional<bool> alongside;
  bool omitted = false;
  std::string omit_reason;
  std::string timestamp;
  double latency_ms = 0.0;
};

inline void to_json(nlohmann::json& j, const ExportRecord& r) {
  j = {{"record", "response"},
       {"schema_version", kSchemaVersion},
       {"study_id", r.study_id},
       {"study_type", to_string(r.study_type)},
       {"session_id", r.session_id},
       {"rater_id", r.rater_id},
       {"item_id", r.item_id},
       {"position", r.position},
       {"provenance", r.provenance},
       {"choice", r.choice ? nlohmann::json(*r.choice) : nlohmann::json()},
       {"alongside", r.alongside ? nlohmann::json(*r.alongside) : nlohmann::json()},
       {"omitted", r.omitted},
       {"omit_reason", r.omitted ? nlohmann::json(r.omit_reason) : nlohmann::json()},
       {"timestamp", r.timestamp},
       {"latency_ms", r.latency_ms}};
}

inline void from_json(const nlohmann::json& j, ExportRecord& r) {
  try {
    r.study_id = j.value("study_id", std::string());
    r.study_type = parse_study_type(j.at("study_type").get<std::string>());
    r.session_id = j.value("session_id", std::string());
    r.rater_id = j.value("rater_id", std::string());
    r.item_id = j.at("item_id").get<std::string>();
    r.position = j.value("position", 0);
    r.provenance = j.value("provenance", nlohmann::json::object());
    r.choice.reset();
    r.alongside.reset();
    if (j.contains("choice") && !j["choice"].is_null()) r.choice = j["choice"].get<std::string>();
    if (j.contains("alongside") && !j["alongside"].is_null()) r.alongside = j["alongside"].get<bool>();
    r.omitted = j.value("omitted", false);
    r.omit_reason = j.contains("omit_reason") && j["omit_reason"].is_string() ? j["omit_reason"].get<std::string>() : "";
    r.timestamp = j.value("timestamp", std::string());
    r.latency_ms = j.value("latency_ms", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed export record: ") + e.what());
  }
}

}  // namespace echo2mri::study
