#pragma once

#include <httplib.h>
// <resolv.h> (via httplib) defines _res, which breaks Eigen headers included later.
#ifdef _res
#undef _res
#endif

#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>

#include "echo2mri/study/service.hpp"

namespace echo2mri::study {

inline std::string media_content_type(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".pgm") return "image/x-portable-graymap";
  if (ext == ".mp4") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".avi") return "video/x-msvideo";
  return "application/octet-stream";
}

/// HTTP+JSON binding of StudyService.
///
///   POST /studies                    StudyDefinition -> 201 {"study_id"}
///   POST /studies/:id/sessions       {"rater_id"}    -> 201 {"session_id","total"}
///   GET  /sessions/:sid/next         -> rater payload or {"done": true}
///   POST /sessions/:sid/responses    RaterResponse   -> 200 ack | 400 | 404 | 409
///   GET  /studies/:id/export         -> application/x-ndjson
///   GET  /media/:token               -> media bytes
///
/// Errors are {"error": {"status", "message"}}.
class StudyHttpServer {
 public:
  explicit StudyHttpServer(StudyService& service) : service_(service) { routes(); }

  /// Optional static front-end served at "/".
  bool mount_ui(const std::filesystem::path& dir) { return server_.set_mount_point("/", dir.string()); }

  /// Blocks until stop().
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  /// Binds an ephemeral port and returns it; call serve() afterwards.
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool serve() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  httplib::Server& raw() noexcept { return server_; }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, {{"error", {{"status", status}, {"message", msg}}}});
  }

  /// Runs `fn`, mapping library errors onto HTTP statuses.
  static void guarded(httplib::Response& res, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  void routes() {
    server_.Post("/studies", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto def = nlohmann::json::parse(req.body).get<StudyDefinition>();
        send_json(res, 201, {{"study_id", service_.create_study(def)}});
      });
    });
    server_.Post("/studies/:id/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
        if (!body.is_object()) throw ValidationError("session request must be a JSON object");
        const auto info = service_.create_session(req.path_params.at("id"), body.value("rater_id", std::string()));
        send_json(res, 201, {{"session_id", info.session_id}, {"total", info.total}});
      });
    });
    server_.Get("/sessions/:sid/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service_.next_item(req.path_params.at("sid"))); });
    });
    server_.Post("/sessions/:sid/responses", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto r = nlohmann::json::parse(req.body).get<RaterResponse>();
        const auto ack = service_.record_response(req.path_params.at("sid"), r);
        send_json(res, 200, {{"ack", true}, {"position", ack.position}, {"total", ack.total}, {"done", ack.done}});
      });
    });
    server_.Get("/studies/:id/export", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(service_.export_results(req.path_params.at("id")), "application/x-ndjson");
      });
    });
    server_.Get("/media/:token", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto ref = service_.resolve_media(req.path_params.at("token"));
        if (!ref) throw NotFoundError("unknown media");
        std::ifstream in(ref->file, std::ios::binary);
        if (!in) throw NotFoundError("media file missing");
        std::ostringstream bytes;
        bytes << in.rdbuf();
        res.status = 200;
        res.set_header("Cache-Control", "no-store");
        // Served under the token only, so the file name never reaches the rater.
        res.set_content(bytes.str(), media_content_type(ref->file));
      });
    });
  }

  StudyService& service_;
  httplib::Server server_;
};

}  // namespace echo2mri::study
