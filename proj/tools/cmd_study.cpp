#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "commands.hpp"
#include "echo2mri/evaluation/report.hpp"
#include "echo2mri/study/http.hpp"

namespace echo2mri::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void add_evaluate(CLI::App& app) {
  struct Opts {
    std::vector<std::string> responses;
    std::string out;
    bool text = false, reference = false;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("evaluate", "Aggregate exported study responses into metrics and tables");
  cmd->add_option("--responses", o->responses, "Exported JSONL file (repeatable)");
  cmd->add_option("--out", o->out, "Write the report JSON here");
  cmd->add_flag("--text", o->text, "Print only the text report, not the JSON");
  cmd->add_flag("--reference", o->reference,
                "Include metrics for the reference confusion matrix and their published values");
  cmd->callback([o] {
    if (o->responses.empty() && !o->reference) throw InputError("pass --responses and/or --reference");
    json report = json::object();
    std::string text;
    if (!o->responses.empty()) {
      std::vector<evaluation::ExportFile> files;
      for (const auto& p : o->responses) files.push_back(evaluation::read_export(p));
      const auto r = evaluation::build_report(files);
      report = r;
      text = evaluation::render_text(r);
    }
    if (o->reference) {
      const auto m = evaluation::compute_metrics(evaluation::kReferenceConfusion);
      report["reference"] = {{"confusion_matrix", evaluation::kReferenceConfusion},
                             {"metrics", m},
                             {"known_issue", evaluation::known_discrepancy()}};
      std::ostringstream os;
      os << "reference confusion matrix: metrics recomputed from the counts do not match the published table\n";
      for (const auto& d : report["reference"]["known_issue"]["differences"]) os << "  " << d.dump() << "\n";
      text += os.str();
    }
    report["text"] = text;
    if (!o->out.empty()) {
      if (fs::path(o->out).has_parent_path()) fs::create_directories(fs::path(o->out).parent_path());
      std::ofstream out(o->out);
      out << report.dump(2) << "\n";
      if (!out) throw Error("cannot write " + o->out);
    }
    if (o->text || !o->out.empty()) {
      std::cout << text;
    } else {
      std::cout << report.dump(2) << "\n";
    }
  });
}

namespace {

std::unique_ptr<study::StudyService> open_service(const std::string& store, const std::string& media) {
  return std::make_unique<study::StudyService>(std::make_unique<study::Journal>(store), media);
}

}  // namespace

void add_study_commands(CLI::App& app) {
  struct Opts {
    std::string store, media, host = "127.0.0.1", ui, definition, study, out;
    int port = 8080;
  };
  auto o = std::make_shared<Opts>();

  auto* serve = app.add_subcommand("serve-study", "Run the blinded reader-study server");
  serve->add_option("--store", o->store, "Study store (JSONL journal)")->required();
  serve->add_option("--media", o->media, "Root directory for item media");
  serve->add_option("--host", o->host, "Bind address")->capture_default_str();
  serve->add_option("--port", o->port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--ui", o->ui, "Static front-end directory served at /");
  serve->callback([o] {
    // Block the shutdown signals before any thread starts so only sigwait sees them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    auto service = open_service(o->store, o->media);
    study::StudyHttpServer server(*service);
    if (!o->ui.empty() && !server.mount_ui(o->ui)) throw Error("cannot serve UI from " + o->ui);
    int port = o->port;
    if (port == 0) {
      port = server.bind_any(o->host);
    } else if (!server.raw().bind_to_port(o->host, port)) {
      port = -1;
    }
    if (port < 0) throw Error("cannot bind " + o->host + ":" + std::to_string(o->port));
    std::thread worker([&] { server.serve(); });
    server.wait_until_ready();
    std::cout << "listening on http://" << o->host << ":" << port << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    std::cerr << "shutting down\n";
    server.stop();
    worker.join();
  });

  auto* create = app.add_subcommand("create-study", "Register a study definition in a store");
  create->add_option("--definition", o->definition, "Study definition JSON")->required();
  create->add_option("--store", o->store, "Study store (JSONL journal)")->required();
  create->add_option("--media", o->media, "Media root, to check that every item file exists");
  create->callback([o] {
    std::ifstream in(o->definition);
    if (!in) throw InputError("cannot open " + o->definition);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ValidationError(std::string("definition is not valid JSON: ") + e.what());
    }
    auto service = open_service(o->store, o->media);
    std::cout << service->create_study(j.get<study::StudyDefinition>()) << "\n";
  });

  auto* exp = app.add_subcommand("export-study", "Write a study's responses as JSONL");
  exp->add_option("--store", o->store, "Study store (JSONL journal)")->required();
  exp->add_option("--study", o->study, "Study id")->required();
  exp->add_option("--out", o->out, "Output file (default stdout)");
  exp->callback([o] {
    auto service = open_service(o->store, "");
    const auto data = service->export_results(o->study);
    if (o->out.empty()) {
      std::cout << data;
      return;
    }
    std::ofstream out(o->out);
    out << data;
    if (!out) throw Error("cannot write " + o->out);
  });
}

}  // namespace echo2mri::cli
