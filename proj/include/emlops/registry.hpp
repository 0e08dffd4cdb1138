#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "emlops/model_package.hpp"
#include "emlops/records.hpp"
#include "emlops/timeutil.hpp"

namespace emlops {

struct RegistryConfig {
  std::filesystem::path data_dir;
  std::chrono::milliseconds stale_after{std::chrono::seconds(30)};
  std::chrono::milliseconds offline_after{std::chrono::seconds(120)};
  Clock clock = system_clock();
};

struct UploadResult {
  ArtifactManifest manifest;
  /// False when identical bytes were already stored.
  bool created = true;
};

struct AssetUpdateResult {
  AssetRecord asset;
  /// False when a newer update already held the asset.
  bool applied = true;
};

/// Artifact repository, device registry, deployment state machine and
/// telemetry/asset store, persisted as one JSON file per entity under
/// `data_dir`. Every write goes through persist::atomic_write, so a crash
/// between any two writes leaves a state that reopening recovers.
///
/// Mutations of one device's records are serialized; reads run concurrently.
class Registry {
 public:
  /// Opens (or creates) the store and recovers from interrupted writes.
  /// Throws StorageError when the directory is unusable.
  explicit Registry(RegistryConfig config);

  UploadResult upload_artifact(std::span<const std::uint8_t> bundle);
  std::vector<ArtifactManifest> list_artifacts() const;
  ArtifactManifest get_artifact(const ArtifactRef& ref) const;
  Bytes download_artifact(const ArtifactRef& ref) const;

  /// Re-registering keeps registered_at and refreshes the heartbeat.
  DeviceRecord register_device(const std::string& device_id, const std::string& hardware_profile);
  DeviceRecord heartbeat(const std::string& device_id);
  std::vector<DeviceView> list_devices() const;
  DeviceView get_device(const std::string& device_id) const;

  DeploymentRecord create_deployment(const std::string& device_id, const ArtifactRef& artifact);
  DeploymentRecord get_deployment(const std::string& deployment_id) const;
  /// All deployments, oldest first; optionally only one device's.
  std::vector<DeploymentRecord> list_deployments(const std::optional<std::string>& device_id = {}) const;

  /// At most one command. Delivers PENDING work and re-offers delivered
  /// work until the device reports on it. Also counts as a heartbeat.
  std::vector<Command> poll_commands(const std::string& device_id);

  /// new_state must be INSTALLING, ACTIVE or FAILED. Re-reporting the
  /// current state is a no-op.
  DeploymentRecord report_status(const std::string& deployment_id, DeploymentState new_state,
                                 const std::string& detail);

  /// Marks the active deployment ROLLED_BACK and creates a deployment of
  /// the previous artifact. Throws PreconditionError without a previous one.
  DeploymentRecord rollback(const std::string& device_id);

  void ingest_measurement(const MeasurementRecord& m);
  AssetUpdateResult ingest_condition_update(const vqi::AssetConditionUpdate& update);
  void ingest_training_sample(const TrainingSample& sample);

  std::vector<AssetRecord> list_assets() const;
  std::vector<std::string> list_sample_ids() const;
  TrainingSample get_training_sample(const std::string& sample_id) const;
  MetricsSummary metrics_summary(const std::optional<std::string>& device_id,
                                 const std::optional<std::string>& version) const;

  DeviceStatus status_of(const DeviceRecord& device) const;

 private:
  struct ArtifactKey {
    std::string name;
    SemVer version;
    auto operator<=>(const ArtifactKey&) const = default;
  };

  void recover();
  void derive_device_slots();
  std::mutex& device_mutex(const std::string& device_id);
  DeviceRecord require_device(const std::string& device_id) const;
  std::optional<DeploymentRecord> in_flight_for(const std::string& device_id) const;
  DeploymentRecord new_deployment(const std::string& device_id, const ArtifactRef& artifact, DeploymentKind kind,
                                  std::optional<std::string> rollback_of);
  void persist_deployment(const DeploymentRecord& d);
  void persist_device(const DeviceRecord& d);
  void apply_activation(DeviceRecord& device, const DeploymentRecord& d) const;
  std::filesystem::path artifact_dir(const ArtifactRef& ref) const;

  RegistryConfig config_;

  mutable std::shared_mutex mutex_;
  std::map<ArtifactKey, ArtifactManifest> artifacts_;
  std::map<std::string, DeviceRecord> devices_;
  std::map<std::string, DeploymentRecord> deployments_;
  std::vector<MeasurementRecord> measurements_;
  std::map<std::string, AssetRecord> assets_;
  std::map<std::string, std::string> sample_checksums_;

  std::mutex upload_mutex_;
  std::mutex device_locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> device_locks_;
  std::mutex asset_mutex_;

  std::atomic<std::uint64_t> next_deployment_{1};
  std::atomic<std::uint64_t> next_measurement_{1};
};

}  // namespace emlops
