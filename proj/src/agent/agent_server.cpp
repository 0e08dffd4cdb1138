#include "emlops/agent_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "emlops/errors.hpp"
#include "emlops/registry_server.hpp"

namespace emlops {

using nlohmann::json;

nlohmann::json to_json(const AgentStatus& status) {
  return json{{"device_id", status.device_id},
              {"active_version", status.active ? json(status.active->version) : json(nullptr)},
              {"previous_version", status.previous ? json(status.previous->version) : json(nullptr)},
              {"active_artifact", status.active ? json(status.active->name) : json(nullptr)},
              {"current_deployment", status.current_deployment ? json(*status.current_deployment) : json(nullptr)}};
}

AgentServer::AgentServer(EdgeAgent& agent) : agent_(agent), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/infer", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
      const InferenceOutcome out = agent_.infer(std::span(data, req.body.size()), req.get_param_value("asset_id"),
                                                req.get_param_value("asset_type"));
      json body = vqi::to_json(out.result);
      body["asset_id"] = out.update.asset_id;
      res.set_content(body.dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status_for(e.kind());
      res.set_content(json{{"error", e.kind()}, {"detail", e.what()}}.dump(), "application/json");
    }
  });
  server_->Get("/status", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(to_json(agent_.status()).dump(), "application/json");
  });
}

AgentServer::~AgentServer() { stop(); }

int AgentServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  spdlog::info("[{}] inference endpoint on {}", agent_.config().device_id, url());
  return port_;
}

void AgentServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace emlops
