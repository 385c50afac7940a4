#include "elicit/error.hpp"
#include "elicit/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <thread>

namespace elicit {

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    HttpRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [k, v] : req.params) request.query.emplace(k, v);
    request.body = req.body;
    HttpResponse response = impl_->service.handle(request);
    res.status = response.status;
    for (const auto& [k, v] : response.headers) res.set_header(k, v);
    res.set_content(response.body, response.content_type);
  };
  auto& s = impl_->server;
  const std::string& static_dir = service.config().static_dir;
  if (!static_dir.empty()) s.set_mount_point("/", static_dir);
  s.Get("/(health|sessions)(/.*)?", handler);
  s.Post("/sessions(/.*)?", handler);
  s.Put("/sessions(/.*)?", handler);
  s.Patch("/sessions(/.*)?", handler);
  s.Delete("/sessions(/.*)?", handler);
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "unexpected failure";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(nlohmann::json{{"error", "InternalError"}, {"message", message}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& s = impl_->server;
  int bound = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  spdlog::info("listening on http://{}:{}", host, bound);
  return bound;
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::stop() {
  impl_->server.stop();
  wait();
}

}  // namespace elicit
