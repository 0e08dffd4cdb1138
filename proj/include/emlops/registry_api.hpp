#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "emlops/model_package.hpp"
#include "emlops/records.hpp"
#include "emlops/registry.hpp"

namespace emlops {

/// What an edge agent needs from the registry. Errors arrive as the typed
/// exceptions the registry raised; connectivity problems as TransportError.
class RegistryApi {
 public:
  virtual ~RegistryApi() = default;

  virtual DeviceRecord register_device(const std::string& device_id, const std::string& hardware_profile) = 0;
  virtual std::vector<Command> poll_commands(const std::string& device_id) = 0;
  virtual Bytes download_artifact(const ArtifactRef& ref) = 0;
  virtual DeploymentRecord report_status(const std::string& deployment_id, DeploymentState state,
                                         const std::string& detail) = 0;
  virtual void ingest_measurement(const MeasurementRecord& m) = 0;
  virtual void ingest_condition_update(const vqi::AssetConditionUpdate& update) = 0;
  virtual void ingest_training_sample(const TrainingSample& sample) = 0;
};

/// In-process adapter, used by tests and single-process fleets.
class LocalRegistryApi : public RegistryApi {
 public:
  explicit LocalRegistryApi(Registry& registry) : registry_(&registry) {}

  /// Points the adapter at a reopened registry.
  void rebind(Registry& registry) { registry_ = &registry; }

  DeviceRecord register_device(const std::string& device_id, const std::string& hardware_profile) override {
    return registry_->register_device(device_id, hardware_profile);
  }
  std::vector<Command> poll_commands(const std::string& device_id) override {
    return registry_->poll_commands(device_id);
  }
  Bytes download_artifact(const ArtifactRef& ref) override { return registry_->download_artifact(ref); }
  DeploymentRecord report_status(const std::string& deployment_id, DeploymentState state,
                                 const std::string& detail) override {
    return registry_->report_status(deployment_id, state, detail);
  }
  void ingest_measurement(const MeasurementRecord& m) override { registry_->ingest_measurement(m); }
  void ingest_condition_update(const vqi::AssetConditionUpdate& update) override {
    registry_->ingest_condition_update(update);
  }
  void ingest_training_sample(const TrainingSample& sample) override { registry_->ingest_training_sample(sample); }

 private:
  Registry* registry_;
};

/// Client for the registry HTTP API. Covers the agent calls and the
/// operator calls used by the CLI. Safe to share between threads.
class HttpRegistryClient : public RegistryApi {
 public:
  /// base_url like "http://127.0.0.1:8080".
  explicit HttpRegistryClient(std::string base_url, std::optional<std::string> token = std::nullopt,
                              std::chrono::milliseconds timeout = std::chrono::seconds(10));

  DeviceRecord register_device(const std::string& device_id, const std::string& hardware_profile) override;
  std::vector<Command> poll_commands(const std::string& device_id) override;
  Bytes download_artifact(const ArtifactRef& ref) override;
  DeploymentRecord report_status(const std::string& deployment_id, DeploymentState state,
                                 const std::string& detail) override;
  void ingest_measurement(const MeasurementRecord& m) override;
  void ingest_condition_update(const vqi::AssetConditionUpdate& update) override;
  void ingest_training_sample(const TrainingSample& sample) override;

  ArtifactManifest upload_artifact(const Bytes& bundle);
  std::vector<ArtifactManifest> list_artifacts();
  DeviceRecord heartbeat(const std::string& device_id);
  std::vector<DeviceView> list_devices();
  DeploymentRecord create_deployment(const std::string& device_id, const ArtifactRef& artifact);
  DeploymentRecord get_deployment(const std::string& deployment_id);
  std::vector<DeploymentRecord> list_deployments(const std::optional<std::string>& device_id = {});
  DeploymentRecord rollback(const std::string& device_id);
  std::vector<AssetRecord> list_assets();
  MetricsSummary metrics_summary(const std::optional<std::string>& device_id,
                                 const std::optional<std::string>& version);

  const std::string& base_url() const { return base_url_; }

 private:
  struct Response {
    int status = 0;
    std::string body;
  };
  Response send(const std::string& method, const std::string& path, const std::string& body,
                const std::string& content_type);
  nlohmann::json call(const std::string& method, const std::string& path, const nlohmann::json& body = nullptr);

  std::string base_url_;
  std::optional<std::string> token_;
  std::chrono::milliseconds timeout_;
};

}  // namespace emlops
