#pragma once

// HTTP front end for SessionManager under the /v1 prefix.

#include <memory>
#include <string>

#include "prefopt/session_service.hpp"

namespace prefopt {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin = "*";
};

/// Reads PREFOPT_DATA_DIR, PREFOPT_BIND (host:port) and PREFOPT_CORS_ORIGIN
/// on top of `defaults`; returns the data directory (empty if unset).
std::string apply_environment(ServerOptions& options);

/// Parses "host:port" or ":port".
void parse_bind_address(const std::string& addr, ServerOptions& options);

class HttpServer {
 public:
  HttpServer(SessionManager& sessions, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket; throws Io when the address is unavailable.
  void bind();
  int port() const { return port_; }
  /// Serves until stop() is called.
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  SessionManager& sessions_;
  ServerOptions options_;
  int port_ = 0;
};

}  // namespace prefopt
