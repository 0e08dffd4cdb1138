#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "emlops/edge_agent.hpp"
#include "emlops/registry_api.hpp"

namespace httplib {
class Server;
}

namespace emlops {

/// {device_id, active_version, previous_version}; versions are null when
/// the slot is empty.
nlohmann::json to_json(const AgentStatus& status);

/// Local endpoints of one agent: POST /infer (raw PPM body, optional
/// asset_id and asset_type query parameters) and GET /status.
class AgentServer {
 public:
  explicit AgentServer(EdgeAgent& agent);
  ~AgentServer();
  AgentServer(const AgentServer&) = delete;
  AgentServer& operator=(const AgentServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }

 private:
  EdgeAgent& agent_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

struct FleetConfig {
  std::string registry_url;
  std::size_t size = 3;
  std::string device_prefix = "edge-";
  std::filesystem::path root;
  std::chrono::milliseconds poll_interval{std::chrono::seconds(2)};
  bool forward_samples = false;
  /// Start a local inference endpoint per agent on a free port.
  bool serve = true;
  std::string host = "127.0.0.1";
  std::chrono::milliseconds backoff_base{std::chrono::seconds(1)};
  std::chrono::milliseconds backoff_cap{std::chrono::seconds(60)};
};

/// N simulated agents in one process, each with its own device id, install
/// root (root/<device id>), registry client and loop thread.
class Fleet {
 public:
  explicit Fleet(FleetConfig config);
  ~Fleet();
  Fleet(const Fleet&) = delete;
  Fleet& operator=(const Fleet&) = delete;

  void start();
  void stop();

  std::size_t size() const { return members_.size(); }
  EdgeAgent& agent(std::size_t i) { return *members_.at(i)->agent; }
  /// Base URL of agent i's inference endpoint; empty when not serving.
  std::string endpoint(std::size_t i) const;

 private:
  struct Member {
    std::unique_ptr<HttpRegistryClient> client;
    std::unique_ptr<EdgeAgent> agent;
    std::unique_ptr<AgentServer> server;
    std::jthread loop;
  };

  FleetConfig config_;
  std::vector<std::unique_ptr<Member>> members_;
};

}  // namespace emlops
