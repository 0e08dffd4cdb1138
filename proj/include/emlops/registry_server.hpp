#pragma once

#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "emlops/registry.hpp"

namespace httplib {
class Server;
}

namespace emlops {

/// HTTP status for an error kind: not_found 404, conflict/state 409,
/// precondition 412, integrity 422, malformed input 400, else 500.
int http_status_for(const char* kind);

/// Serves a Registry over HTTP/JSON on a background thread.
class RegistryServer {
 public:
  /// With `token` set every request must carry "Authorization: Bearer <token>".
  explicit RegistryServer(Registry& registry, std::optional<std::string> token = std::nullopt);
  ~RegistryServer();
  RegistryServer(const RegistryServer&) = delete;
  RegistryServer& operator=(const RegistryServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  /// Throws ConfigError when the address cannot be bound.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string url() const;

 private:
  void install_routes();

  Registry& registry_;
  std::optional<std::string> token_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace emlops
