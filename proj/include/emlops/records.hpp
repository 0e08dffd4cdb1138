#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emlops/model_package.hpp"
#include "emlops/tensor.hpp"
#include "emlops/timeutil.hpp"
#include "emlops/vqi.hpp"

/// Records exchanged between the registry, its agents and operators, plus
/// their JSON wire forms.
namespace emlops {

/// Device ids, sample ids and artifact names double as file names.
bool is_safe_identifier(std::string_view id);
void require_safe_identifier(std::string_view id, std::string_view what);

/// Wall clock reading truncated to the millisecond wire resolution.
TimePoint now_ms(const Clock& clock);
TimePoint truncate_ms(TimePoint tp);

enum class DeploymentState { pending, delivered, installing, active, failed, rolled_back };

std::string_view to_string(DeploymentState s);
/// Accepts the upper-case wire names. Throws BadRequestError.
DeploymentState parse_deployment_state(std::string_view s);

/// PENDING->DELIVERED, DELIVERED->{INSTALLING, FAILED},
/// INSTALLING->{ACTIVE, FAILED}, ACTIVE->ROLLED_BACK.
bool is_legal_transition(DeploymentState from, DeploymentState to);
/// PENDING, DELIVERED and INSTALLING; a device has at most one of these.
bool is_in_flight(DeploymentState s);

struct ArtifactRef {
  std::string name;
  std::string version;

  std::string str() const { return name + "@" + version; }
  bool operator==(const ArtifactRef&) const = default;
};

struct HistoryEntry {
  DeploymentState state = DeploymentState::pending;
  TimePoint timestamp;
  std::string detail;

  bool operator==(const HistoryEntry&) const = default;
};

/// True when the history starts at PENDING, follows legal transitions and
/// never goes back in time.
bool is_legal_history(const std::vector<HistoryEntry>& history);

enum class DeploymentKind { install, rollback };

struct DeploymentRecord {
  std::string deployment_id;
  std::string device_id;
  ArtifactRef artifact;
  DeploymentState state = DeploymentState::pending;
  std::vector<HistoryEntry> state_history;
  TimePoint created_at;
  DeploymentKind kind = DeploymentKind::install;
  /// For rollbacks: the deployment being rolled back.
  std::optional<std::string> rollback_of;
  std::uint64_t sequence = 0;

  bool reached(DeploymentState s) const;
  bool operator==(const DeploymentRecord&) const = default;
};

enum class DeviceStatus { online, stale, offline };
std::string_view to_string(DeviceStatus s);

struct DeviceRecord {
  std::string device_id;
  std::string hardware_profile;
  TimePoint registered_at;
  TimePoint last_heartbeat;
  std::optional<ArtifactRef> active_artifact;
  std::optional<ArtifactRef> previous_artifact;

  bool operator==(const DeviceRecord&) const = default;
};

/// A device as listed by the registry: the record plus derived fields.
struct DeviceView {
  DeviceRecord record;
  DeviceStatus status = DeviceStatus::online;
  std::optional<std::string> latest_deployment_id;
  std::optional<DeploymentState> latest_deployment_state;
};

struct MeasurementRecord {
  std::string device_id;
  std::string model_version;
  TimePoint timestamp;
  double inference_latency_ms = 0.0;
  OpCounters op_counters;
  std::string predicted_label;
  double confidence = 0.0;

  /// Throws BadRequestError.
  void validate() const;
  bool operator==(const MeasurementRecord&) const = default;
};

struct AssetRecord {
  std::string asset_id;
  std::string asset_type;
  Condition condition = Condition::unknown;
  std::string label;
  double confidence = 0.0;
  TimePoint last_update;
  std::string device_id;
  std::string model_version;

  bool operator==(const AssetRecord&) const = default;
};

struct TrainingSample {
  std::string sample_id;
  Bytes image;
  std::optional<std::string> label;
  std::string device_id;
  TimePoint captured_at;

  bool operator==(const TrainingSample&) const = default;
};

enum class CommandKind { install, rollback };

/// One unit of work handed to a device by poll_commands.
struct Command {
  CommandKind kind = CommandKind::install;
  std::string deployment_id;
  ArtifactRef artifact;
  /// Checksum the delivered bundle must carry.
  std::string checksum;

  bool operator==(const Command&) const = default;
};

struct MetricsSummary {
  std::size_t count = 0;
  std::optional<double> mean_latency_ms;
  std::optional<double> p95_latency_ms;
};

/// count, mean and nearest-rank p95 of the given latencies.
MetricsSummary summarize_latencies(std::vector<double> latencies);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws BadRequestError on malformed input.
Bytes base64_decode(std::string_view text);

/// Rebuilds the typed error named by an API error body and throws it.
[[noreturn]] void throw_error_of_kind(std::string_view kind, const std::string& detail);

void to_json(nlohmann::json& j, const ArtifactRef& r);
void from_json(const nlohmann::json& j, ArtifactRef& r);
void to_json(nlohmann::json& j, const HistoryEntry& h);
void from_json(const nlohmann::json& j, HistoryEntry& h);
void to_json(nlohmann::json& j, const DeploymentRecord& d);
void from_json(const nlohmann::json& j, DeploymentRecord& d);
void to_json(nlohmann::json& j, const DeviceRecord& d);
void from_json(const nlohmann::json& j, DeviceRecord& d);
void to_json(nlohmann::json& j, const DeviceView& d);
void from_json(const nlohmann::json& j, DeviceView& d);
void to_json(nlohmann::json& j, const OpCounters& c);
void from_json(const nlohmann::json& j, OpCounters& c);
void to_json(nlohmann::json& j, const MeasurementRecord& m);
void from_json(const nlohmann::json& j, MeasurementRecord& m);
void to_json(nlohmann::json& j, const AssetRecord& a);
void from_json(const nlohmann::json& j, AssetRecord& a);
/// Image bytes travel base64-encoded under "image_base64".
void to_json(nlohmann::json& j, const TrainingSample& s);
void from_json(const nlohmann::json& j, TrainingSample& s);
void to_json(nlohmann::json& j, const Command& c);
void from_json(const nlohmann::json& j, Command& c);
void to_json(nlohmann::json& j, const MetricsSummary& m);
void from_json(const nlohmann::json& j, MetricsSummary& m);

namespace vqi {
void to_json(nlohmann::json& j, const AssetConditionUpdate& u);
void from_json(const nlohmann::json& j, AssetConditionUpdate& u);
}  // namespace vqi

}  // namespace emlops
