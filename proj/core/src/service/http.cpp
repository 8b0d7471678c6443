#include "vplab/service/http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "vplab/common/error.hpp"

namespace vplab::service {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ApiError(400, "invalid_json", e.what());
  }
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

/// Maps exceptions to structured errors.
Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ApiError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const ConfigError& e) {
      send_error(res, 400, "invalid_config", e.what());
    } catch (const InvalidPrompt& e) {
      send_error(res, 400, "invalid_prompt", e.what());
    } catch (const InvalidImage& e) {
      send_error(res, 400, "invalid_image", e.what());
    } catch (const EmptyReference& e) {
      send_error(res, 409, "empty_reference", e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  Service& svc;
  httplib::Server server;

  explicit Impl(Service& s) : svc(s) { routes(); }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status));
      }
    });

    server.Get("/health", guarded([](const auto&, auto& res) { send_json(res, 200, {{"status", "ok"}}); }));

    server.Post("/projects", guarded([this](const auto& req, auto& res) {
                  send_json(res, 201, svc.create_project(parse_body(req)));
                }));
    server.Get("/projects", guarded([this](const auto&, auto& res) { send_json(res, 200, svc.list_projects()); }));
    server.Get(R"(/projects/([^/]+))", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.get_project(req.matches[1]));
               }));

    server.Post(R"(/projects/([^/]+)/images)", guarded([this](const auto& req, auto& res) {
                  std::vector<Upload> uploads;
                  if (req.is_multipart_form_data()) {
                    for (const auto& [field, file] : req.files) {
                      uploads.push_back({file.filename.empty() ? field : file.filename, file.content_type, file.content});
                    }
                  } else if (!req.body.empty()) {
                    uploads.push_back({"upload", req.get_header_value("Content-Type"), req.body});
                  }
                  send_json(res, 201, svc.add_images(req.matches[1], uploads));
                }));
    server.Get(R"(/projects/([^/]+)/images/([^/]+))", guarded([this](const auto& req, auto& res) {
                 res.set_content(svc.image_png(req.matches[1], req.matches[2]), "image/png");
               }));

    server.Put(R"(/projects/([^/]+)/reference)", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.set_reference(req.matches[1], parse_body(req)));
               }));
    server.Post(R"(/projects/([^/]+)/reference/validate)", guarded([this](const auto& req, auto& res) {
                  send_json(res, 200, svc.validate_reference(req.matches[1], parse_body(req)));
                }));

    server.Post(R"(/projects/([^/]+)/match)", guarded([this](const auto& req, auto& res) {
                  send_json(res, 202, svc.submit_match(req.matches[1]));
                }));
    server.Post(R"(/projects/([^/]+)/finetune)", guarded([this](const auto& req, auto& res) {
                  send_json(res, 202, svc.submit_finetune(req.matches[1], parse_body(req)));
                }));
    server.Post(R"(/projects/([^/]+)/evaluate)", guarded([this](const auto& req, auto& res) {
                  send_json(res, 202, svc.submit_evaluate(req.matches[1]));
                }));

    server.Get(R"(/projects/([^/]+)/labels)", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.list_labels(req.matches[1]));
               }));
    server.Get(R"(/projects/([^/]+)/labels/([^/]+))", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.get_label(req.matches[1], req.matches[2]));
               }));
    server.Put(R"(/projects/([^/]+)/labels/([^/]+))", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.put_label(req.matches[1], req.matches[2], parse_body(req)));
               }));

    server.Get(R"(/projects/([^/]+)/jobs)", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.list_jobs(req.matches[1]));
               }));
    server.Get(R"(/jobs/([^/]+))", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.get_job(req.matches[1]));
               }));
    server.Get(R"(/projects/([^/]+)/metrics)", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, svc.metrics(req.matches[1]));
               }));
    server.Get(R"(/projects/([^/]+)/export)", guarded([this](const auto& req, auto& res) {
                 const std::string pid = req.matches[1];
                 res.set_header("Content-Disposition", "attachment; filename=\"" + pid + ".epef\"");
                 res.set_content(svc.export_checkpoint(pid), "application/octet-stream");
               }));
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace vplab::service
