#include <gtest/gtest.h>
#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "echo2mri/evaluation/report.hpp"
#include "echo2mri/study/http.hpp"
#include "echo2mri/study/service.hpp"

namespace fs = std::filesystem;
namespace st = echo2mri::study;
namespace ev = echo2mri::evaluation;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("echo2mri_study_" + st::detail::opaque_token().substr(0, 12));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void touch(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << bytes;
}

/// Balanced confusion study whose media live under `root`.
st::StudyDefinition confusion_def(const fs::path& root, int per_class, std::uint64_t seed = 1) {
  st::StudyDefinition d;
  d.study_type = st::StudyType::confusion;
  d.seed = seed;
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool syn = i < per_class;
    const std::string rel = std::string(syn ? "synthetic/gen_" : "original/real_") + std::to_string(i) + ".png";
    touch(root / rel, "PNG-" + rel);
    st::StudyItem it;
    it.item_id = (syn ? "syn-" : "orig-") + std::to_string(i);
    it.media = {{"image", rel}};
    it.provenance = {{"label", syn ? "synthetic" : "original"}, {"source_run", "cyclegan-run-7"}};
    d.items.push_back(it);
  }
  return d;
}

st::StudyDefinition rwma_def(const fs::path& root, int n) {
  st::StudyDefinition d;
  d.study_type = st::StudyType::rwma;
  for (int i = 0; i < n; ++i) {
    const std::string e = "rwma/echo_" + std::to_string(i) + ".mp4", s = "rwma/synth_" + std::to_string(i) + ".mp4";
    touch(root / e, "echo video " + std::to_string(i));
    touch(root / s, "synthetic video " + std::to_string(i));
    d.items.push_back({"patient-" + std::to_string(i), {{"echo", e}, {"synthetic", s}}, {{"patient", i}}});
  }
  return d;
}

st::RaterResponse answer(const nlohmann::json& payload, const std::string& choice) {
  st::RaterResponse r;
  r.item = payload["item"]["token"];
  r.choice = choice;
  r.latency_ms = 812.5;
  return r;
}

/// Walks a whole session, choosing via `pick(payload)`.
template <typename Pick>
void complete_session(st::StudyService& svc, const std::string& sid, Pick pick) {
  for (;;) {
    const auto p = svc.next_item(sid);
    if (p["done"]) return;
    svc.record_response(sid, pick(p));
  }
}

ev::EvaluationReport evaluate(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return ev::build_report({ev::read_export(in)});
}

}  // namespace

TEST(StudyDefinition, ValidationErrors) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());

  auto unbalanced = confusion_def(tmp.path(), 5);
  unbalanced.items.erase(unbalanced.items.begin(), unbalanced.items.begin() + 2);  // 3 synthetic, 5 original
  EXPECT_THROW(svc.create_study(unbalanced), echo2mri::ValidationError);
  unbalanced.allow_unbalanced = true;
  EXPECT_NO_THROW(svc.create_study(unbalanced));

  auto missing = confusion_def(tmp.path(), 1);
  missing.items[0].media["image"] = "nowhere.png";
  EXPECT_THROW(svc.create_study(missing), echo2mri::ValidationError);

  auto escape = confusion_def(tmp.path(), 1);
  escape.items[0].media["image"] = "../secret.png";
  EXPECT_THROW(svc.create_study(escape), echo2mri::ValidationError);

  auto roles = confusion_def(tmp.path(), 1);
  roles.items[0].media = {{"echo", roles.items[0].media["image"]}};
  EXPECT_THROW(svc.create_study(roles), echo2mri::ValidationError);

  auto dup = confusion_def(tmp.path(), 1);
  dup.items[1].item_id = dup.items[0].item_id;
  EXPECT_THROW(svc.create_study(dup), echo2mri::ValidationError);

  auto label = confusion_def(tmp.path(), 1);
  label.items[0].provenance["label"] = "maybe";
  EXPECT_THROW(svc.create_study(label), echo2mri::ValidationError);

  auto too_many = confusion_def(tmp.path(), 1);
  too_many.n_per_rater = 3;
  EXPECT_THROW(svc.create_study(too_many), echo2mri::ValidationError);

  EXPECT_THROW(svc.create_study(st::StudyDefinition{}), echo2mri::ValidationError);
  EXPECT_THROW(svc.create_session("st-nope", "r1"), echo2mri::NotFoundError);
  EXPECT_THROW(svc.next_item("se-nope"), echo2mri::NotFoundError);
}

TEST(StudyDefinition, JsonRoundTrip) {
  TempDir tmp;
  const auto d = confusion_def(tmp.path(), 2, 99);
  const nlohmann::json j = d;
  const auto back = j.get<st::StudyDefinition>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_THROW(nlohmann::json({{"study_type", "poll"}, {"items", nlohmann::json::array()}}).get<st::StudyDefinition>(),
               echo2mri::ValidationError);
}

TEST(StudySession, OrderReproducibleForSameSeed) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  const auto def = confusion_def(tmp.path(), 100, 42);
  const auto a = svc.create_study(def), b = svc.create_study(def);
  auto walk = [&](const std::string& study) {
    const auto sid = svc.create_session(study, "r").session_id;
    complete_session(svc, sid, [](const nlohmann::json& p) { return answer(p, "original"); });
    std::vector<std::string> ids;
    std::istringstream in(svc.export_results(study));
    for (const auto& r : ev::read_export(in).records) ids.push_back(r.item_id);
    return ids;
  };
  const auto ia = walk(a), ib = walk(b);
  ASSERT_EQ(ia.size(), 200u);
  EXPECT_EQ(ia, ib);
  EXPECT_EQ(std::set<std::string>(ia.begin(), ia.end()).size(), 200u);
  // A second session of the same study gets a different order.
  EXPECT_NE(st::detail::session_order(42, 0, 200, 200), st::detail::session_order(42, 1, 200, 200));
}

TEST(StudySession, PayloadsCarryNoProvenance) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  const auto def = confusion_def(tmp.path(), 100);
  const auto study = svc.create_study(def);
  const auto sid = svc.create_session(study, "rater-1").session_id;
  std::set<std::string> masked;
  int served = 0;
  for (;;) {
    const auto p = svc.next_item(sid);
    const std::string raw = p.dump();
    for (const char* key : {"provenance", "label", "item_id", "source_run", "cyclegan", ".png", "gen_", "real_"}) {
      EXPECT_EQ(raw.find(key), std::string::npos) << key << " leaked in " << raw;
    }
    for (const auto& it : def.items) EXPECT_EQ(raw.find(it.item_id), std::string::npos);
    if (p["done"]) break;
    // Schema diff: with opaque fields masked every payload is identical.
    auto m = p;
    m["item"]["token"] = "T";
    m["item"]["media"][0]["url"] = "U";
    m["position"] = 0;
    masked.insert(m.dump());
    svc.record_response(sid, answer(p, "synthetic"));
    ++served;
  }
  EXPECT_EQ(served, 200);
  EXPECT_EQ(masked.size(), 1u);
}

TEST(StudySession, FirstItemSyntheticRateNearHalf) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  const auto study = svc.create_study(confusion_def(tmp.path(), 100, 2024));
  for (int i = 0; i < 1000; ++i) {
    const auto sid = svc.create_session(study, "r" + std::to_string(i)).session_id;
    svc.record_response(sid, answer(svc.next_item(sid), "original"));
  }
  std::istringstream in(svc.export_results(study));
  const auto recs = ev::read_export(in).records;
  ASSERT_EQ(recs.size(), 1000u);
  int synthetic = 0;
  for (const auto& r : recs) {
    EXPECT_EQ(r.position, 0);
    synthetic += r.provenance["label"] == "synthetic";
  }
  EXPECT_NEAR(synthetic / 1000.0, 0.5, 0.05);
}

TEST(StudySession, ResponseRules) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  const auto study = svc.create_study(confusion_def(tmp.path(), 2));
  const auto s = svc.create_session(study, "r1");
  EXPECT_EQ(s.total, 4);
  const auto first = svc.next_item(s.session_id);
  EXPECT_EQ(first["position"], 0);
  EXPECT_FALSE(first["done"]);
  EXPECT_EQ(first["choice_schema"]["options"], (nlohmann::json{"synthetic", "original"}));

  EXPECT_THROW(svc.record_response(s.session_id, answer(first, "maybe")), echo2mri::ValidationError);
  auto nothing = answer(first, "synthetic");
  nothing.choice.reset();
  EXPECT_THROW(svc.record_response(s.session_id, nothing), echo2mri::ValidationError);
  auto stranger = answer(first, "synthetic");
  stranger.item = "deadbeef";
  EXPECT_THROW(svc.record_response(s.session_id, stranger), echo2mri::ValidationError);

  // Cursor moves only on a recorded response.
  EXPECT_EQ(svc.next_item(s.session_id), first);
  const auto ack = svc.record_response(s.session_id, answer(first, "synthetic"));
  EXPECT_EQ(ack.position, 1);
  EXPECT_FALSE(ack.done);
  EXPECT_THROW(svc.record_response(s.session_id, answer(first, "original")), echo2mri::ConflictError);

  // Skipping ahead is not allowed either: answer the current item via an omit.
  st::RaterResponse omit;
  omit.item = svc.next_item(s.session_id)["item"]["token"];
  omit.omitted = true;
  omit.omit_reason = "image did not load";
  svc.record_response(s.session_id, omit);
  complete_session(svc, s.session_id, [](const nlohmann::json& p) { return answer(p, "original"); });
  const auto done = svc.next_item(s.session_id);
  EXPECT_TRUE(done["done"]);
  EXPECT_EQ(done["position"], 4);
  EXPECT_FALSE(done.contains("item"));
}

TEST(StudySession, RwmaAlongsideRule) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  const auto study = svc.create_study(rwma_def(tmp.path(), 3));
  const auto sid = svc.create_session(study, "r1").session_id;
  auto p = svc.next_item(sid);
  ASSERT_EQ(p["item"]["media"].size(), 2u);
  EXPECT_EQ(p["item"]["media"][0]["role"], "echo");
  EXPECT_EQ(p["item"]["media"][1]["role"], "synthetic");
  EXPECT_EQ(p["choice_schema"]["follow_up"]["when_choice"], "echo");

  auto both = answer(p, "both");
  both.alongside = true;
  EXPECT_THROW(svc.record_response(sid, both), echo2mri::ValidationError);
  EXPECT_THROW(svc.record_response(sid, answer(p, "echo")), echo2mri::ValidationError);
  auto echo = answer(p, "echo");
  echo.alongside = true;
  svc.record_response(sid, echo);
  p = svc.next_item(sid);
  svc.record_response(sid, answer(p, "synthetic-mri"));
  p = svc.next_item(sid);
  svc.record_response(sid, answer(p, "both"));

  const auto rep = evaluate(svc.export_results(study));
  ASSERT_TRUE(rep.rwma);
  EXPECT_EQ(rep.rwma->table.counts, (std::vector<long>{1, 1, 1}));
  EXPECT_EQ(rep.rwma->alongside_yes, 1);
}

TEST(StudyExport, ScriptedRatersFeedEvaluation) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  const auto def = confusion_def(tmp.path(), 10);
  const auto study = svc.create_study(def);
  // The scripted perfect rater is told the truth out of band, keyed by media path.
  std::map<std::string, std::string> truth;
  for (const auto& it : def.items) truth[it.media.at("image")] = it.provenance["label"];

  const auto perfect = svc.create_session(study, "perfect").session_id;
  complete_session(svc, perfect, [&](const nlohmann::json& p) {
    const std::string url = p["item"]["media"][0]["url"];
    const auto ref = svc.resolve_media(url.substr(std::string("/media/").size()));
    return answer(p, truth.at(fs::relative(ref->file, tmp.path()).string()));
  });
  auto rep = evaluate(svc.export_results(study));
  EXPECT_TRUE(rep.complete);
  EXPECT_EQ(ev::compute_metrics(rep.confusion->pooled).accuracy, 1.0);

  const auto naysayer = svc.create_session(study, "always-original").session_id;
  complete_session(svc, naysayer, [](const nlohmann::json& p) { return answer(p, "original"); });
  rep = evaluate(svc.export_results(study));
  const auto m = ev::compute_metrics(rep.confusion->per_rater.at("always-original"));
  EXPECT_EQ(*m.recall, 0.0);
  EXPECT_EQ(*m.specificity, 1.0);

  const auto partial = svc.create_session(study, "partial").session_id;
  svc.record_response(partial, answer(svc.next_item(partial), "original"));
  st::RaterResponse omit;
  omit.item = svc.next_item(partial)["item"]["token"];
  omit.omitted = true;
  svc.record_response(partial, omit);
  const auto text = svc.export_results(study);
  const auto header = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_FALSE(header["complete"]);
  EXPECT_EQ(header["sessions"], 3);
  EXPECT_EQ(header["sessions_finished"], 2);
  EXPECT_EQ(header["items_assigned"], 60);
  EXPECT_EQ(header["responses"], 41);
  EXPECT_EQ(header["omitted"], 1);
  EXPECT_EQ(header["responses"].get<int>() + header["omitted"].get<int>(), header["items_served"].get<int>());
  EXPECT_FALSE(evaluate(text).complete);
}

TEST(StudyStore, SurvivesRestart) {
  TempDir tmp;
  const auto store = tmp.path() / "store.jsonl";
  std::string study, sid, before;
  nlohmann::json pending;
  {
    st::StudyService svc(std::make_unique<st::Journal>(store), tmp.path());
    study = svc.create_study(confusion_def(tmp.path(), 5));
    sid = svc.create_session(study, "r1").session_id;
    for (int i = 0; i < 4; ++i) svc.record_response(sid, answer(svc.next_item(sid), i % 2 ? "original" : "synthetic"));
    pending = svc.next_item(sid);
    before = svc.export_results(study);
  }
  st::StudyService again(std::make_unique<st::Journal>(store), tmp.path());
  EXPECT_EQ(again.export_results(study), before);
  EXPECT_EQ(again.next_item(sid), pending);
  EXPECT_EQ(again.next_item(sid)["position"], 4);
  again.record_response(sid, answer(pending, "original"));
  EXPECT_THROW(again.record_response(sid, answer(pending, "original")), echo2mri::ConflictError);
}

TEST(StudyStore, TornTailIsDroppedAndCorruptionDetected) {
  TempDir tmp;
  const auto store = tmp.path() / "store.jsonl";
  std::string study;
  {
    st::StudyService svc(std::make_unique<st::Journal>(store), tmp.path());
    study = svc.create_study(confusion_def(tmp.path(), 1));
  }
  std::ofstream(store, std::ios::app) << R"({"event":"session","sess)";
  {
    auto journal = std::make_unique<st::Journal>(store);
    EXPECT_GT(journal->torn_bytes(), 0u);
    st::StudyService svc(std::move(journal), tmp.path());
    EXPECT_EQ(svc.session_ids(study).size(), 0u);
    svc.create_session(study, "r1");
  }
  {
    st::StudyService svc(std::make_unique<st::Journal>(store), tmp.path());
    EXPECT_EQ(svc.session_ids(study).size(), 1u);
  }
  std::ofstream(store, std::ios::app) << "garbage\n{\"event\":\"study\"}\n";
  EXPECT_THROW(st::Journal{store}, echo2mri::Error);
}

namespace {

struct LiveServer {
  explicit LiveServer(st::StudyService& svc) : http(svc) {
    port = http.bind_any();
    thread = std::thread([this] { http.serve(); });
    http.wait_until_ready();
  }
  ~LiveServer() {
    http.stop();
    thread.join();
  }
  st::StudyHttpServer http;
  int port = 0;
  std::thread thread;
};

}  // namespace

TEST(StudyHttp, FullRoundTrip) {
  TempDir tmp;
  st::StudyService svc(std::make_unique<st::Journal>(), tmp.path());
  LiveServer server(svc);
  httplib::Client cli("127.0.0.1", server.port);

  auto res = cli.Post("/studies", nlohmann::json(rwma_def(tmp.path(), 2)).dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const std::string study = nlohmann::json::parse(res->body)["study_id"];

  res = cli.Post("/studies/" + study + "/sessions", R"({"rater_id":"dr-a"})", "application/json");
  ASSERT_EQ(res->status, 201);
  const std::string sid = nlohmann::json::parse(res->body)["session_id"];

  res = cli.Get("/sessions/" + sid + "/next");
  ASSERT_EQ(res->status, 200);
  const auto p = nlohmann::json::parse(res->body);
  // Each rwma item serves both of its videos byte for byte.
  std::set<std::string> bodies;
  for (const auto& m : p["item"]["media"]) {
    auto media = cli.Get(m["url"].get<std::string>());
    ASSERT_EQ(media->status, 200);
    EXPECT_EQ(media->get_header_value("Content-Type"), "video/mp4");
    bodies.insert(media->body);
  }
  EXPECT_EQ(bodies.size(), 2u);
  EXPECT_TRUE(bodies.count("echo video 0") || bodies.count("echo video 1"));

  const nlohmann::json bad = {{"item", p["item"]["token"]}, {"choice", "both"}, {"alongside", true}};
  EXPECT_EQ(cli.Post("/sessions/" + sid + "/responses", bad.dump(), "application/json")->status, 400);
  const nlohmann::json good = {{"item", p["item"]["token"]}, {"choice", "synthetic-mri"}, {"latency_ms", 900}};
  res = cli.Post("/sessions/" + sid + "/responses", good.dump(), "application/json");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["position"], 1);
  EXPECT_EQ(cli.Post("/sessions/" + sid + "/responses", good.dump(), "application/json")->status, 409);
  EXPECT_EQ(cli.Post("/sessions/" + sid + "/responses", "{oops", "application/json")->status, 400);

  EXPECT_EQ(cli.Get("/sessions/se-missing/next")->status, 404);
  EXPECT_EQ(cli.Get("/media/0000")->status, 404);
  EXPECT_EQ(cli.Post("/studies/st-missing/sessions", R"({"rater_id":"x"})", "application/json")->status, 404);
  EXPECT_EQ(cli.Post("/studies", R"({"study_type":"confusion","items":[]})", "application/json")->status, 400);

  res = cli.Get("/studies/" + study + "/export");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/x-ndjson");
  const auto rep = evaluate(res->body);
  EXPECT_FALSE(rep.complete);
  EXPECT_EQ(rep.rwma->table.counts[1], 1);
  const auto err = nlohmann::json::parse(cli.Get("/sessions/nope/next")->body);
  EXPECT_EQ(err["error"]["status"], 404);
}

TEST(StudyHttp, AckedResponsesSurviveKill) {
  TempDir tmp;
  const auto store = tmp.path() / "store.jsonl";
  std::string study, sid;
  {
    st::StudyService svc(std::make_unique<st::Journal>(store), tmp.path());
    study = svc.create_study(confusion_def(tmp.path(), 3));
    sid = svc.create_session(study, "r1").session_id;
  }
  int pipefd[2];
  ASSERT_EQ(pipe(pipefd), 0);
  const pid_t child = fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    close(pipefd[0]);
    st::StudyService svc(std::make_unique<st::Journal>(store), tmp.path());
    st::StudyHttpServer http(svc);
    const int port = http.bind_any();
    (void)!write(pipefd[1], &port, sizeof port);
    close(pipefd[1]);
    http.serve();
    _exit(0);
  }
  close(pipefd[1]);
  int port = 0;
  ASSERT_EQ(read(pipefd[0], &port, sizeof port), static_cast<ssize_t>(sizeof port));
  close(pipefd[0]);
  {
    httplib::Client cli("127.0.0.1", port);
    for (int i = 0; i < 3; ++i) {
      auto res = cli.Get("/sessions/" + sid + "/next");
      ASSERT_TRUE(res);
      const auto p = nlohmann::json::parse(res->body);
      const nlohmann::json r = {{"item", p["item"]["token"]}, {"choice", "synthetic"}};
      ASSERT_EQ(cli.Post("/sessions/" + sid + "/responses", r.dump(), "application/json")->status, 200);
    }
  }
  kill(child, SIGKILL);
  int status = 0;
  waitpid(child, &status, 0);
  EXPECT_TRUE(WIFSIGNALED(status));

  st::StudyService svc(std::make_unique<st::Journal>(store), tmp.path());
  EXPECT_EQ(svc.next_item(sid)["position"], 3);
  std::istringstream in(svc.export_results(study));
  EXPECT_EQ(ev::read_export(in).records.size(), 3u);
}

TEST(StudyStore, SecondWriterIsRefused) {
  TempDir tmp;
  const auto store = tmp.path() / "store.jsonl";
  st::Journal first(store);
  EXPECT_THROW(st::Journal{store}, echo2mri::Error);
}
