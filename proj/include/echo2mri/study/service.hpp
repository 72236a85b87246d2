#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"
#include "echo2mri/study/journal.hpp"
#include "echo2mri/study/schema.hpp"

namespace echo2mri::study {

namespace detail {

/// Unbiased draw in [0, n) from the raw engine output, so orders do not
/// depend on the standard library's distribution implementation.
inline std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do v = rng();
  while (v >= limit);
  return v % n;
}

inline std::vector<int> session_order(std::uint64_t study_seed, int ordinal, int n_items, int n_served) {
  std::seed_seq seq{static_cast<std::uint32_t>(study_seed), static_cast<std::uint32_t>(study_seed >> 32),
                    static_cast<std::uint32_t>(ordinal)};
  std::mt19937_64 rng(seq);
  std::vector<int> order(n_items);
  for (int i = 0; i < n_items; ++i) order[i] = i;
  for (int i = n_items - 1; i > 0; --i) std::swap(order[i], order[draw_below(rng, i + 1)]);
  order.resize(n_served);
  return order;
}

/// 128 random bits as hex; carries no information about what it names.
inline std::string opaque_token() {
  static thread_local std::random_device rd;
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 4; ++i) {
    os.width(8);
    os.fill('0');
    os << rd();
  }
  return os.str();
}

inline bool safe_relative(const std::string& p) {
  const std::filesystem::path path(p);
  if (p.empty() || path.is_absolute()) return false;
  return std::none_of(path.begin(), path.end(), [](const auto& part) { return part == ".."; });
}

}  // namespace detail

struct MediaRef {
  std::filesystem::path file;
};

/// Blinded study bookkeeping over a Journal. Thread-safe: mutations take an
/// exclusive lock, reads a shared one.
class StudyService {
 public:
  /// `media_root` empty disables media resolution checks and serving.
  explicit StudyService(std::unique_ptr<Journal> journal = std::make_unique<Journal>(),
                        std::filesystem::path media_root = {})
      : journal_(std::move(journal)), media_root_(std::move(media_root)) {
    for (const auto& ev : journal_->replayed()) apply(ev);
  }

  std::string create_study(const StudyDefinition& def) {
    def.validate();
    for (const auto& it : def.items) {
      for (const auto& [role, path] : it.media) {
        if (!detail::safe_relative(path)) {
          throw ValidationError("item '" + it.item_id + "' media '" + path + "' must be a relative path inside the media root");
        }
        if (!media_root_.empty() && !std::filesystem::is_regular_file(media_root_ / path)) {
          throw ValidationError("item '" + it.item_id + "' media '" + path + "' not found under the media root");
        }
      }
    }
    nlohmann::json item_tokens = nlohmann::json::array(), media_tokens = nlohmann::json::array();
    for (const auto& it : def.items) {
      item_tokens.push_back(detail::opaque_token());
      nlohmann::json m = nlohmann::json::object();
      for (const auto& [role, path] : it.media) m[role] = detail::opaque_token();
      media_tokens.push_back(m);
    }
    std::unique_lock lock(mu_);
    const nlohmann::json ev = {{"event", "study"},
                               {"study_id", "st-" + detail::opaque_token().substr(0, 16)},
                               {"definition", def},
                               {"item_tokens", item_tokens},
                               {"media_tokens", media_tokens},
                               {"created_at", utc_now_iso8601()}};
    journal_->append(ev);
    apply(ev);
    return ev["study_id"];
  }

  struct SessionInfo {
    std::string session_id;
    int total = 0;
  };

  SessionInfo create_session(const std::string& study_id, const std::string& rater_id) {
    if (rater_id.empty()) throw ValidationError("rater_id must be non-empty");
    std::unique_lock lock(mu_);
    const Study& st = study(study_id);
    const int ordinal = static_cast<int>(st.sessions.size());
    const auto order = detail::session_order(st.def.seed, ordinal, static_cast<int>(st.def.items.size()),
                                             st.def.served_per_session());
    const nlohmann::json ev = {{"event", "session"},
                               {"session_id", "se-" + detail::opaque_token()},
                               {"study_id", study_id},
                               {"rater_id", rater_id},
                               {"ordinal", ordinal},
                               {"order", order},
                               {"created_at", utc_now_iso8601()}};
    journal_->append(ev);
    apply(ev);
    return {ev["session_id"], static_cast<int>(order.size())};
  }

  /// Rater-facing view of the current item, or a done marker. Contains no
  /// provenance, item ids or media paths.
  nlohmann::json next_item(const std::string& session_id) const {
    std::shared_lock lock(mu_);
    const Session& se = session(session_id);
    const Study& st = studies_.at(se.study_id);
    nlohmann::json p = {{"schema_version", kSchemaVersion},
                        {"session_id", session_id},
                        {"study_type", to_string(st.def.study_type)},
                        {"position", static_cast<int>(se.answers.size())},
                        {"total", static_cast<int>(se.order.size())}};
    if (se.answers.size() == se.order.size()) {
      p["done"] = true;
      return p;
    }
    p["done"] = false;
    const int idx = se.order[se.answers.size()];
    nlohmann::json media = nlohmann::json::array();
    for (const auto& role : media_roles(st.def.study_type)) {
      media.push_back({{"role", role}, {"url", "/media/" + st.media_tokens[idx].at(role)}});
    }
    p["item"] = {{"token", st.item_tokens[idx]}, {"media", media}};
    p["choice_schema"] = choice_schema(st.def.study_type);
    return p;
  }

  struct Ack {
    int position = 0;
    int total = 0;
    bool done = false;
  };

  /// Validates, persists, then applies. Returns only after the journal fsync.
  Ack record_response(const std::string& session_id, RaterResponse r) {
    std::unique_lock lock(mu_);
    const Session& se = session(session_id);
    const Study& st = studies_.at(se.study_id);
    r.validate(st.def.study_type);
    const auto tok = st.token_index.find(r.item);
    if (tok == st.token_index.end()) throw ValidationError("unknown item token");
    const int idx = tok->second;
    if (std::any_of(se.answers.begin(), se.answers.end(), [&](const auto& a) { return a.item_index == idx; })) {
      throw ConflictError("item already answered in this session");
    }
    if (se.answers.size() == se.order.size() || se.order[se.answers.size()] != idx) {
      throw ValidationError("response does not target the current item");
    }
    if (r.timestamp.empty()) r.timestamp = utc_now_iso8601();
    const nlohmann::json ev = {
        {"event", "response"}, {"session_id", session_id}, {"item_index", idx}, {"response", r}};
    journal_->append(ev);
    apply(ev);
    const Session& after = sessions_.at(session_id);
    return {static_cast<int>(after.answers.size()), static_cast<int>(after.order.size()),
            after.answers.size() == after.order.size()};
  }

  /// Header line plus one un-blinded record per answered or omitted item.
  std::string export_results(const std::string& study_id) const {
    std::shared_lock lock(mu_);
    const Study& st = study(study_id);
    long assigned = 0, responses = 0, omitted = 0, finished = 0;
    std::ostringstream body;
    for (const auto& sid : st.sessions) {
      const Session& se = sessions_.at(sid);
      assigned += static_cast<long>(se.order.size());
      finished += se.answers.size() == se.order.size();
      for (std::size_t pos = 0; pos < se.answers.size(); ++pos) {
        const auto& a = se.answers[pos];
        const auto& item = st.def.items[a.item_index];
        ExportRecord rec;
        rec.study_id = study_id;
        rec.study_type = st.def.study_type;
        rec.session_id = sid;
        rec.rater_id = se.rater_id;
        rec.item_id = item.item_id;
        rec.position = static_cast<int>(pos);
        rec.provenance = item.provenance;
        rec.choice = a.response.choice;
        rec.alongside = a.response.alongside;
        rec.omitted = a.response.omitted;
        rec.omit_reason = a.response.omit_reason;
        rec.timestamp = a.response.timestamp;
        rec.latency_ms = a.response.latency_ms;
        (rec.omitted ? omitted : responses)++;
        body << nlohmann::json(rec).dump() << "\n";
      }
    }
    const nlohmann::json header = {{"record", "header"},
                                   {"schema_version", kSchemaVersion},
                                   {"study_id", study_id},
                                   {"study_type", to_string(st.def.study_type)},
                                   {"complete", !st.sessions.empty() && finished == static_cast<long>(st.sessions.size())},
                                   {"sessions", st.sessions.size()},
                                   {"sessions_finished", finished},
                                   {"items_assigned", assigned},
                                   {"items_served", responses + omitted},
                                   {"responses", responses},
                                   {"omitted", omitted}};
    return header.dump() + "\n" + body.str();
  }

  /// File behind an opaque media token.
  std::optional<MediaRef> resolve_media(const std::string& token) const {
    std::shared_lock lock(mu_);
    if (media_root_.empty()) return std::nullopt;
    const auto it = media_index_.find(token);
    if (it == media_index_.end()) return std::nullopt;
    return MediaRef{media_root_ / it->second};
  }

  std::vector<std::string> study_ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, st] : studies_) ids.push_back(id);
    return ids;
  }

  std::vector<std::string> session_ids(const std::string& study_id) const {
    std::shared_lock lock(mu_);
    return study(study_id).sessions;
  }

  static nlohmann::json choice_schema(StudyType t) {
    nlohmann::json s = {{"field", "choice"}, {"options", choices(t)}, {"omit_allowed", true}};
    if (t == StudyType::rwma) {
      s["follow_up"] = {{"field", "alongside"},
                        {"type", "boolean"},
                        {"when_choice", "echo"},
                        {"prompt", "Would you also like to see the synthetic MRI alongside?"}};
    }
    return s;
  }

 private:
  struct Answer {
    int item_index = 0;
    RaterResponse response;
  };
  struct Study {
    StudyDefinition def;
    std::vector<std::string> item_tokens;
    std::vector<std::map<std::string, std::string>> media_tokens;
    std::map<std::string, int> token_index;
    std::vector<std::string> sessions;
  };
  struct Session {
    std::string study_id;
    std::string rater_id;
    std::vector<int> order;
    std::vector<Answer> answers;
  };

  const Study& study(const std::string& id) const {
    const auto it = studies_.find(id);
    if (it == studies_.end()) throw NotFoundError("unknown study '" + id + "'");
    return it->second;
  }

  const Session& session(const std::string& id) const {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session");
    return it->second;
  }

  /// Applies one journal event; used both live and on replay.
  void apply(const nlohmann::json& ev) {
    const auto kind = ev.at("event").get<std::string>();
    if (kind == "study") {
      Study st;
      st.def = ev.at("definition").get<StudyDefinition>();
      st.item_tokens = ev.at("item_tokens").get<std::vector<std::string>>();
      st.media_tokens = ev.at("media_tokens").get<std::vector<std::map<std::string, std::string>>>();
      for (std::size_t i = 0; i < st.item_tokens.size(); ++i) {
        st.token_index[st.item_tokens[i]] = static_cast<int>(i);
        for (const auto& [role, tok] : st.media_tokens[i]) media_index_[tok] = st.def.items[i].media.at(role);
      }
      studies_[ev.at("study_id").get<std::string>()] = std::move(st);
    } else if (kind == "session") {
      Session se;
      se.study_id = ev.at("study_id").get<std::string>();
      se.rater_id = ev.at("rater_id").get<std::string>();
      se.order = ev.at("order").get<std::vector<int>>();
      const auto sid = ev.at("session_id").get<std::string>();
      studies_.at(se.study_id).sessions.push_back(sid);
      sessions_[sid] = std::move(se);
    } else if (kind == "response") {
      sessions_.at(ev.at("session_id").get<std::string>())
          .answers.push_back({ev.at("item_index").get<int>(), ev.at("response").get<RaterResponse>()});
    } else {
      throw Error("unknown study store event '" + kind + "'");
    }
  }

  mutable std::shared_mutex mu_;
  std::unique_ptr<Journal> journal_;
  std::filesystem::path media_root_;
  std::map<std::string, Study> studies_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::string> media_index_;  // token -> relative path
};

}  // namespace echo2mri::study
