#include "trace/server.h"

#include <httplib.h>

namespace trace {

HttpServer::HttpServer(const Api& api, ServerOptions options)
    : api_(api), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  auto respond = [this](const httplib::Request& req, httplib::Response& res) {
    ApiParams params;
    for (const auto& [key, value] : req.params) params.emplace(key, value);
    const ApiResponse out = api_.handle(req.path, params);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server_->Get(R"(/api/cubes(/.*)?)", respond);
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    nlohmann::json body = {{"code", res.status == 404 ? "not_found" : "http_error"},
                           {"message", httplib::status_message(res.status)},
                           {"details", nlohmann::json::object()}};
    res.set_content(body.dump(), "application/json");
  });
  server_->set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
    res.set_header("X-Trace-Format", "1");
    if (!options_.cors_origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
      res.set_header("Access-Control-Expose-Headers", "X-Trace-Format");
    }
  });
  server_->Options(R"(.*)", [this](const httplib::Request&, httplib::Response& res) {
    if (!options_.cors_origin.empty()) {
      res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
    res.status = 204;
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind() {
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  return port;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace trace
