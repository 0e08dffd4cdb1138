#include <cstdio>

#include "emlops/agent_server.hpp"
#include "emlops/errors.hpp"

namespace emlops {

Fleet::Fleet(FleetConfig config) : config_(std::move(config)) {
  if (config_.size < 1) throw ConfigError("a fleet needs at least one agent");
  for (std::size_t i = 0; i < config_.size; ++i) {
    char suffix[24];
    std::snprintf(suffix, sizeof suffix, "%02zu", i + 1);
    const std::string device_id = config_.device_prefix + suffix;

    auto m = std::make_unique<Member>();
    m->client = std::make_unique<HttpRegistryClient>(config_.registry_url);
    AgentConfig ac;
    ac.device_id = device_id;
    ac.hardware_profile = "simulated-fleet";
    ac.install_root = config_.root / device_id;
    ac.poll_interval = config_.poll_interval;
    ac.forward_samples = config_.forward_samples;
    ac.backoff_base = config_.backoff_base;
    ac.backoff_cap = config_.backoff_cap;
    m->agent = std::make_unique<EdgeAgent>(std::move(ac), *m->client);
    if (config_.serve) m->server = std::make_unique<AgentServer>(*m->agent);
    members_.push_back(std::move(m));
  }
}

Fleet::~Fleet() { stop(); }

void Fleet::start() {
  for (auto& m : members_) {
    if (m->server) m->server->start(config_.host, 0);
    m->loop = std::jthread([agent = m->agent.get()](std::stop_token stop) { agent->run(stop); });
  }
}

void Fleet::stop() {
  for (auto& m : members_) {
    if (m->loop.joinable()) {
      m->loop.request_stop();
      m->loop.join();
    }
    if (m->server) m->server->stop();
  }
}

std::string Fleet::endpoint(std::size_t i) const {
  const auto& m = members_.at(i);
  return m->server ? m->server->url() : std::string();
}

}  // namespace emlops
