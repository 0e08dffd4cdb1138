#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stop_token>
#include <string>

#include "emlops/records.hpp"
#include "emlops/registry_api.hpp"
#include "emlops/timeutil.hpp"
#include "emlops/vqi.hpp"

namespace emlops {

/// Exponential retry delay: base, 2*base, 4*base, ... capped.
class Backoff {
 public:
  Backoff(std::chrono::milliseconds base, std::chrono::milliseconds cap) : base_(base), cap_(cap), next_(base) {}

  std::chrono::milliseconds next();
  void reset() { next_ = base_; }

 private:
  std::chrono::milliseconds base_;
  std::chrono::milliseconds cap_;
  std::chrono::milliseconds next_;
};

struct AgentConfig {
  std::string device_id;
  std::string hardware_profile = "simulated";
  std::filesystem::path install_root;
  std::chrono::milliseconds poll_interval{std::chrono::seconds(30)};
  /// Send undecodable or UNKNOWN-condition images to the registry as training samples.
  bool forward_samples = false;
  std::string default_asset_type = "transmission_tower";
  std::chrono::milliseconds backoff_base{std::chrono::seconds(1)};
  std::chrono::milliseconds backoff_cap{std::chrono::seconds(60)};
  Clock clock = system_clock();
};

/// A verified bundle on disk plus its loaded model.
struct InstalledArtifact {
  ArtifactManifest manifest;
  std::filesystem::path path;
  std::shared_ptr<const vqi::LoadedArtifact> loaded;

  ArtifactRef ref() const { return {manifest.name, manifest.version}; }
};

struct AgentStatus {
  std::string device_id;
  std::optional<ArtifactManifest> active;
  std::optional<ArtifactManifest> previous;
  std::optional<std::string> current_deployment;
};

struct InferenceOutcome {
  vqi::InferenceResult result;
  vqi::AssetConditionUpdate update;
  MeasurementRecord measurement;
};

/// Device-side agent. Installs land under install_root/artifacts and the
/// slot assignment lives in install_root/state.json; rewriting that file is
/// the activation commit, so a crash at any point leaves the agent serving
/// either the old or the new model after restart.
class EdgeAgent {
 public:
  /// Loads persisted state. A slot whose bundle fails verification is
  /// dropped and nothing is served from it.
  EdgeAgent(AgentConfig config, RegistryApi& api);

  void register_with_registry();
  /// One poll (which is also the heartbeat); handles any returned command.
  /// Returns the number of commands handled.
  std::size_t poll_once();
  /// Heartbeat/poll loop with backoff on failures; returns once stopped.
  void run(std::stop_token stop);

  /// Dispatches by kind. Commands already completed are re-reported, not
  /// re-executed. Returns the terminal state reported.
  DeploymentState handle(const Command& command);
  DeploymentState install(const Command& command);
  /// Swaps the active and previous slots without downloading.
  DeploymentState rollback_local(const Command& command);

  /// decode -> preprocess -> forward -> postprocess on the active model.
  /// The condition update and measurement are pushed to the registry on a
  /// best-effort basis. Throws UnavailableError with no active model and
  /// InputError for undecodable images.
  InferenceOutcome infer(std::span<const std::uint8_t> image, const std::string& asset_id = {},
                         const std::string& asset_type = {});

  AgentStatus status() const;
  std::shared_ptr<const vqi::LoadedArtifact> active_model() const;
  const AgentConfig& config() const { return config_; }

 private:
  struct State {
    std::optional<InstalledArtifact> active;
    std::optional<InstalledArtifact> previous;
    std::optional<std::string> current_deployment;
    std::map<std::string, DeploymentState> completed;
  };

  void load_state();
  void persist(const State& state);
  std::optional<InstalledArtifact> load_slot(const nlohmann::json& slot) const;
  void begin(const Command& command);
  DeploymentState activate(const Command& command, State next);
  DeploymentState fail(const Command& command, const std::string& detail);
  DeploymentState replay(const Command& command, DeploymentState terminal);
  DeploymentState install_download(const Command& command);
  void report(const Command& command, DeploymentState state, const std::string& detail);
  void forward_sample(std::span<const std::uint8_t> image, const std::string& reason);

  AgentConfig config_;
  RegistryApi& api_;
  std::mutex command_mutex_;
  mutable std::mutex state_mutex_;
  State state_;
  std::mutex wait_mutex_;
  std::condition_variable_any wake_;
};

}  // namespace emlops
