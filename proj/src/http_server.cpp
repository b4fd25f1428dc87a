#include "prefopt/http_server.hpp"

#include <cstdlib>

#include <httplib.h>

namespace prefopt {

using nlohmann::json;

struct HttpServer::Impl {
  httplib::Server server;
};

void parse_bind_address(const std::string& addr, ServerOptions& options) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) fail(ErrorKind::Input, "bind address must look like host:port");
  const std::string host = addr.substr(0, colon);
  const std::string port = addr.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) fail(ErrorKind::Input, "invalid port in '" + addr + "'");
  if (!host.empty()) options.host = host;
  options.port = static_cast<int>(p);
}

std::string apply_environment(ServerOptions& options) {
  if (const char* bind = std::getenv("PREFOPT_BIND"); bind && *bind) parse_bind_address(bind, options);
  if (const char* origin = std::getenv("PREFOPT_CORS_ORIGIN"); origin && *origin) options.cors_origin = origin;
  const char* dir = std::getenv("PREFOPT_DATA_DIR");
  return dir ? dir : "";
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

template <class F>
void guarded(httplib::Response& res, F&& handler) {
  try {
    handler();
  } catch (const Error& e) {
    send_error(res, http_status(e), error_code(e), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal_error", e.what());
  }
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception&) {
    throw ServiceError(ErrorKind::Input, "invalid_json", "request body is not valid JSON");
  }
}

}  // namespace

HttpServer::HttpServer(SessionManager& sessions, ServerOptions options)
    : impl_(std::make_unique<Impl>()), sessions_(sessions), options_(std::move(options)) {
  auto& srv = impl_->server;
  const std::string origin = options_.cors_origin;

  // httplib's default also sets SO_REUSEPORT, which would let a second
  // server share a port that is already in use.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  srv.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Cache-Control", "no-store");
  });
  srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"api_version", 1}, {"sessions", sessions_.session_ids().size()}});
  });
  srv.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, sessions_.create_session(parse_body(req))); });
  });
  srv.Post("/v1/sessions/import", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, {{"id", sessions_.import_session(parse_body(req))}}); });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/duel)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.get_duel(req.matches[1])); });
  });
  srv.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.submit_feedback(req.matches[1], parse_body(req))); });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.get_history(req.matches[1])); });
  });
  srv.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(sessions_.export_session(req.matches[1]).dump(2) + "\n", "application/json");
    });
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", "no such route or method");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::bind() {
  auto& srv = impl_->server;
  if (options_.port == 0) {
    port_ = srv.bind_to_any_port(options_.host);
  } else {
    port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) {
    fail(ErrorKind::Io, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
}

void HttpServer::run() {
  if (port_ <= 0) bind();
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace prefopt
