#include "facetcoh/annotation.hpp"

#include "facetcoh/error.hpp"

#include <httplib.h>
#include <json.hpp>

namespace facetcoh {

using nlohmann::json;

namespace {

int http_status(Errc code) {
  switch (code) {
    case Errc::NotQualified: return 403;
    case Errc::UnknownTask:
    case Errc::UnknownGoldSet: return 404;
    case Errc::DuplicateJudgment:
    case Errc::AlreadyQualified:
    case Errc::TaskComplete: return 409;
    case Errc::InvalidArgument:
    case Errc::Parse: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), {{"error", std::string(errc_name(e.code()))}, {"message", e.what()}});
}

json task_json(const AnnotationTask& t) {
  return {{"task_id", t.task_id},
          {"query", t.query},
          {"criterion", std::string(to_string(t.criterion))},
          {"left", t.left},
          {"right", t.right}};
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e);
  } catch (const json::exception& e) {
    send_json(res, 400, {{"error", "Parse"}, {"message", e.what()}});
  }
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  httplib::Server server;

  explicit Impl(AnnotationStore& s) : store(s) { routes(); }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/qualification", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json items = json::array();
        for (const auto& g : store.gold_tasks())
          items.push_back({{"id", g.id},
                           {"query", g.query},
                           {"criterion", std::string(to_string(g.criterion))},
                           {"left", g.left},
                           {"right", g.right}});
        send_json(res, 200, {{"tasks", items}});
      });
    });

    server.Post(R"(/annotators/([^/]+)/qualification)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = json::parse(req.body);
        std::map<std::string, Choice> answers;
        for (const auto& [id, choice] : body.at("answers").items()) answers[id] = choice_from_string(choice.get<std::string>());
        const auto a = store.run_qualification(req.matches[1], answers);
        send_json(res, 200,
                  {{"annotator_id", a.id}, {"status", std::string(to_string(a.qualification))}, {"score", a.score}});
      });
    });

    server.Get("/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_param("annotator") || !req.has_param("criterion"))
          throw Error(Errc::InvalidArgument, "annotator and criterion query parameters are required");
        const auto task =
            store.next_task(req.get_param_value("annotator"), criterion_from_string(req.get_param_value("criterion")));
        if (!task) {
          res.status = 204;
          return;
        }
        send_json(res, 200, task_json(*task));
      });
    });

    server.Post("/judgments", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = json::parse(req.body);
        JudgmentRequest r{body.at("task_id").get<std::string>(), body.at("annotator_id").get<std::string>(),
                          criterion_from_string(body.at("criterion").get<std::string>()),
                          choice_from_string(body.at("choice").get<std::string>())};
        const auto jd = store.submit_judgment(r);
        send_json(res, 200, {{"status", "ok"}, {"task_id", jd.task_id}, {"received_at", jd.received_at}});
      });
    });

    server.Get("/export", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto criterion = criterion_from_string(req.has_param("criterion") ? req.get_param_value("criterion")
                                                                                : std::string("quality"));
        res.status = 200;
        res.set_content(export_to_json(store.export_judgments(criterion)), "application/json");
      });
    });

    server.Get("/progress", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        const auto p = store.progress();
        json j;
        j["tasks"] = p.tasks;
        std::size_t complete = 0;
        std::size_t incomplete = 0;
        for (const auto& [criterion, cp] : p.per_criterion) {
          j["criteria"][std::string(to_string(criterion))] = {
              {"complete", cp.complete}, {"incomplete", cp.incomplete}, {"judgments", cp.judgments}};
          complete += cp.complete;
          incomplete += cp.incomplete;
        }
        j["complete"] = complete;
        j["incomplete"] = incomplete;
        j["annotators"] = json::object();
        for (const auto& [id, entry] : p.annotators)
          j["annotators"][id] = {{"status", std::string(to_string(entry.first.qualification))},
                                 {"judgments", entry.second}};
        send_json(res, 200, j);
      });
    });
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store) : impl_(std::make_unique<Impl>(store)) {}

AnnotationServer::~AnnotationServer() { stop(); }

bool AnnotationServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int AnnotationServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool AnnotationServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace facetcoh
