#include "emlops/records.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>

#include "emlops/errors.hpp"

namespace emlops {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxIdentifier = 128;

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

TimePoint time_field(const json& j, const char* key) { return parse_utc(j.at(key).get<std::string>()); }

}  // namespace

bool is_safe_identifier(std::string_view id) {
  if (id.empty() || id.size() > kMaxIdentifier || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
           c == '-';
  });
}

void require_safe_identifier(std::string_view id, std::string_view what) {
  if (!is_safe_identifier(id)) {
    throw BadRequestError(std::string(what) + " '" + std::string(id) +
                          "' must be 1-128 characters of [A-Za-z0-9._-] not starting with '.'");
  }
}

TimePoint truncate_ms(TimePoint tp) { return std::chrono::floor<std::chrono::milliseconds>(tp); }

TimePoint now_ms(const Clock& clock) { return truncate_ms(clock()); }

std::string_view to_string(DeploymentState s) {
  switch (s) {
    case DeploymentState::pending: return "PENDING";
    case DeploymentState::delivered: return "DELIVERED";
    case DeploymentState::installing: return "INSTALLING";
    case DeploymentState::active: return "ACTIVE";
    case DeploymentState::failed: return "FAILED";
    case DeploymentState::rolled_back: return "ROLLED_BACK";
  }
  return "?";
}

DeploymentState parse_deployment_state(std::string_view s) {
  for (auto state : {DeploymentState::pending, DeploymentState::delivered, DeploymentState::installing,
                     DeploymentState::active, DeploymentState::failed, DeploymentState::rolled_back}) {
    if (to_string(state) == s) return state;
  }
  throw BadRequestError("unknown deployment state '" + std::string(s) + "'");
}

bool is_legal_transition(DeploymentState from, DeploymentState to) {
  using S = DeploymentState;
  switch (from) {
    case S::pending: return to == S::delivered;
    case S::delivered: return to == S::installing || to == S::failed;
    case S::installing: return to == S::active || to == S::failed;
    case S::active: return to == S::rolled_back;
    case S::failed:
    case S::rolled_back: return false;
  }
  return false;
}

bool is_in_flight(DeploymentState s) {
  return s == DeploymentState::pending || s == DeploymentState::delivered || s == DeploymentState::installing;
}

bool is_legal_history(const std::vector<HistoryEntry>& history) {
  if (history.empty() || history.front().state != DeploymentState::pending) return false;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (!is_legal_transition(history[i - 1].state, history[i].state)) return false;
    if (history[i].timestamp < history[i - 1].timestamp) return false;
  }
  return true;
}

bool DeploymentRecord::reached(DeploymentState s) const {
  return std::any_of(state_history.begin(), state_history.end(), [s](const HistoryEntry& h) { return h.state == s; });
}

std::string_view to_string(DeviceStatus s) {
  switch (s) {
    case DeviceStatus::online: return "online";
    case DeviceStatus::stale: return "stale";
    case DeviceStatus::offline: return "offline";
  }
  return "?";
}

void MeasurementRecord::validate() const {
  require_safe_identifier(device_id, "device id");
  if (!(inference_latency_ms >= 0.0) || !std::isfinite(inference_latency_ms)) {
    throw BadRequestError("inference latency must be a finite value >= 0");
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw BadRequestError("confidence must lie in [0, 1]");
}

MetricsSummary summarize_latencies(std::vector<double> latencies) {
  MetricsSummary m;
  m.count = latencies.size();
  if (latencies.empty()) return m;
  std::sort(latencies.begin(), latencies.end());
  double sum = 0.0;
  for (double v : latencies) sum += v;
  m.mean_latency_ms = sum / static_cast<double>(latencies.size());
  // Nearest rank: the ceil(0.95 n)-th smallest value.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(latencies.size())));
  m.p95_latency_ms = latencies[std::max<std::size_t>(rank, 1) - 1];
  return m;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw BadRequestError("base64 length must be a multiple of 4");
  Bytes out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw BadRequestError("malformed base64");
  // EVP_DecodeBlock keeps the bytes that padding stands for.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

void throw_error_of_kind(std::string_view kind, const std::string& detail) {
  if (kind == "not_found") throw NotFoundError(detail);
  if (kind == "conflict") throw ConflictError(detail);
  if (kind == "state") throw StateError(detail);
  if (kind == "precondition") throw PreconditionError(detail);
  if (kind == "bad_request") throw BadRequestError(detail);
  if (kind == "integrity") throw IntegrityError(detail);
  if (kind == "manifest") throw ManifestError(detail);
  if (kind == "version") throw VersionError(detail);
  if (kind == "unavailable") throw UnavailableError(detail);
  if (kind == "input") throw InputError(detail, 0);
  if (kind == "parse") throw ParseError(detail, 0);
  if (kind == "storage") throw StorageError(detail);
  if (kind == "config") throw ConfigError(detail);
  throw Error(detail);
}

void to_json(json& j, const ArtifactRef& r) { j = json{{"name", r.name}, {"version", r.version}}; }

void from_json(const json& j, ArtifactRef& r) {
  r.name = j.at("name").get<std::string>();
  r.version = j.at("version").get<std::string>();
}

void to_json(json& j, const HistoryEntry& h) {
  j = json{{"state", to_string(h.state)}, {"timestamp", format_utc(h.timestamp)}, {"detail", h.detail}};
}

void from_json(const json& j, HistoryEntry& h) {
  h.state = parse_deployment_state(j.at("state").get<std::string>());
  h.timestamp = time_field(j, "timestamp");
  h.detail = j.value("detail", "");
}

void to_json(json& j, const DeploymentRecord& d) {
  j = json{{"deployment_id", d.deployment_id},
           {"device_id", d.device_id},
           {"artifact", d.artifact},
           {"state", to_string(d.state)},
           {"state_history", d.state_history},
           {"created_at", format_utc(d.created_at)},
           {"kind", d.kind == DeploymentKind::install ? "install" : "rollback"},
           {"rollback_of", optional_json(d.rollback_of)},
           {"sequence", d.sequence}};
}

void from_json(const json& j, DeploymentRecord& d) {
  d.deployment_id = j.at("deployment_id").get<std::string>();
  d.device_id = j.at("device_id").get<std::string>();
  d.artifact = j.at("artifact").get<ArtifactRef>();
  d.state = parse_deployment_state(j.at("state").get<std::string>());
  d.state_history = j.at("state_history").get<std::vector<HistoryEntry>>();
  d.created_at = time_field(j, "created_at");
  const std::string kind = j.value("kind", "install");
  if (kind != "install" && kind != "rollback") throw BadRequestError("unknown deployment kind '" + kind + "'");
  d.kind = kind == "install" ? DeploymentKind::install : DeploymentKind::rollback;
  d.rollback_of = optional_string(j, "rollback_of");
  d.sequence = j.value("sequence", std::uint64_t{0});
}

void to_json(json& j, const DeviceRecord& d) {
  j = json{{"device_id", d.device_id},
           {"hardware_profile", d.hardware_profile},
           {"registered_at", format_utc(d.registered_at)},
           {"last_heartbeat", format_utc(d.last_heartbeat)},
           {"active_artifact", optional_json(d.active_artifact)},
           {"previous_artifact", optional_json(d.previous_artifact)}};
}

void from_json(const json& j, DeviceRecord& d) {
  d.device_id = j.at("device_id").get<std::string>();
  d.hardware_profile = j.value("hardware_profile", "");
  d.registered_at = time_field(j, "registered_at");
  d.last_heartbeat = time_field(j, "last_heartbeat");
  d.active_artifact = optional_field<ArtifactRef>(j, "active_artifact");
  d.previous_artifact = optional_field<ArtifactRef>(j, "previous_artifact");
}

void to_json(json& j, const DeviceView& d) {
  j = d.record;
  j["status"] = to_string(d.status);
  j["latest_deployment"] = d.latest_deployment_id
                               ? json{{"deployment_id", *d.latest_deployment_id},
                                      {"state", to_string(d.latest_deployment_state.value_or(DeploymentState::pending))}}
                               : json(nullptr);
}

void from_json(const json& j, DeviceView& d) {
  d.record = j.get<DeviceRecord>();
  const std::string status = j.at("status").get<std::string>();
  if (status == "online") d.status = DeviceStatus::online;
  else if (status == "stale") d.status = DeviceStatus::stale;
  else if (status == "offline") d.status = DeviceStatus::offline;
  else throw BadRequestError("unknown device status '" + status + "'");
  d.latest_deployment_id.reset();
  d.latest_deployment_state.reset();
  if (j.contains("latest_deployment") && !j.at("latest_deployment").is_null()) {
    const json& latest = j.at("latest_deployment");
    d.latest_deployment_id = latest.at("deployment_id").get<std::string>();
    d.latest_deployment_state = parse_deployment_state(latest.at("state").get<std::string>());
  }
}

void to_json(json& j, const OpCounters& c) {
  j = json{{"float_mul_adds", c.float_mul_adds}, {"int_mul_adds", c.int_mul_adds}, {"range_scans", c.range_scans}};
}

void from_json(const json& j, OpCounters& c) {
  c.float_mul_adds = j.value("float_mul_adds", std::uint64_t{0});
  c.int_mul_adds = j.value("int_mul_adds", std::uint64_t{0});
  c.range_scans = j.value("range_scans", std::uint64_t{0});
}

void to_json(json& j, const MeasurementRecord& m) {
  j = json{{"device_id", m.device_id},
           {"model_version", m.model_version},
           {"timestamp", format_utc(m.timestamp)},
           {"inference_latency_ms", m.inference_latency_ms},
           {"op_counters", m.op_counters},
           {"predicted_label", m.predicted_label},
           {"confidence", m.confidence}};
}

void from_json(const json& j, MeasurementRecord& m) {
  m.device_id = j.at("device_id").get<std::string>();
  m.model_version = j.at("model_version").get<std::string>();
  m.timestamp = time_field(j, "timestamp");
  m.inference_latency_ms = j.at("inference_latency_ms").get<double>();
  m.op_counters = j.value("op_counters", OpCounters{});
  m.predicted_label = j.value("predicted_label", "");
  m.confidence = j.at("confidence").get<double>();
}

void to_json(json& j, const AssetRecord& a) {
  j = json{{"asset_id", a.asset_id},       {"asset_type", a.asset_type},
           {"condition", to_string(a.condition)}, {"label", a.label},
           {"confidence", a.confidence},   {"last_update", format_utc(a.last_update)},
           {"device_id", a.device_id},     {"model_version", a.model_version}};
}

void from_json(const json& j, AssetRecord& a) {
  a.asset_id = j.at("asset_id").get<std::string>();
  a.asset_type = j.value("asset_type", "");
  a.condition = parse_condition(j.at("condition").get<std::string>());
  a.label = j.value("label", "");
  a.confidence = j.at("confidence").get<double>();
  a.last_update = time_field(j, "last_update");
  a.device_id = j.at("device_id").get<std::string>();
  a.model_version = j.value("model_version", "");
}

void to_json(json& j, const TrainingSample& s) {
  j = json{{"sample_id", s.sample_id},
           {"image_base64", base64_encode(s.image)},
           {"label", optional_json(s.label)},
           {"device_id", s.device_id},
           {"captured_at", format_utc(s.captured_at)}};
}

void from_json(const json& j, TrainingSample& s) {
  s.sample_id = j.at("sample_id").get<std::string>();
  s.image = base64_decode(j.at("image_base64").get<std::string>());
  s.label = optional_string(j, "label");
  s.device_id = j.at("device_id").get<std::string>();
  s.captured_at = time_field(j, "captured_at");
}

void to_json(json& j, const Command& c) {
  j = json{{"command", c.kind == CommandKind::install ? "install" : "rollback"},
           {"deployment_id", c.deployment_id},
           {"artifact", c.artifact},
           {"checksum", c.checksum}};
}

void from_json(const json& j, Command& c) {
  const std::string kind = j.at("command").get<std::string>();
  if (kind != "install" && kind != "rollback") throw BadRequestError("unknown command '" + kind + "'");
  c.kind = kind == "install" ? CommandKind::install : CommandKind::rollback;
  c.deployment_id = j.at("deployment_id").get<std::string>();
  c.artifact = j.at("artifact").get<ArtifactRef>();
  c.checksum = j.value("checksum", "");
}

void to_json(json& j, const MetricsSummary& m) {
  j = json{{"count", m.count},
           {"mean_latency_ms", optional_json(m.mean_latency_ms)},
           {"p95_latency_ms", optional_json(m.p95_latency_ms)}};
}

void from_json(const json& j, MetricsSummary& m) {
  m.count = j.at("count").get<std::size_t>();
  m.mean_latency_ms = optional_field<double>(j, "mean_latency_ms");
  m.p95_latency_ms = optional_field<double>(j, "p95_latency_ms");
}

namespace vqi {

void to_json(json& j, const AssetConditionUpdate& u) {
  j = json{{"asset_id", u.asset_id},         {"asset_type", u.asset_type},
           {"label", u.label},               {"condition", emlops::to_string(u.condition)},
           {"confidence", u.confidence},     {"model_version", u.model_version},
           {"device_id", u.device_id},       {"timestamp", format_utc(u.timestamp)}};
}

void from_json(const json& j, AssetConditionUpdate& u) {
  u.asset_id = j.at("asset_id").get<std::string>();
  u.asset_type = j.value("asset_type", "");
  u.label = j.value("label", "");
  u.condition = parse_condition(j.at("condition").get<std::string>());
  u.confidence = j.at("confidence").get<double>();
  u.model_version = j.value("model_version", "");
  u.device_id = j.at("device_id").get<std::string>();
  u.timestamp = time_field(j, "timestamp");
}

}  // namespace vqi

}  // namespace emlops
