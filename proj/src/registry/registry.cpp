#include "emlops/registry.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>

#include <spdlog/spdlog.h>

#include "emlops/errors.hpp"
#include "emlops/persistence.hpp"

namespace emlops {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kBundleFile = "bundle.emlm";
constexpr const char* kManifestFile = "manifest.json";

std::string sequence_id(const char* prefix, std::uint64_t seq, int width) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%0*llu", prefix, width, static_cast<unsigned long long>(seq));
  return buf;
}

json read_json(const fs::path& path) {
  auto text = persist::read_text(path);
  if (!text) throw StorageError("cannot read '" + path.string() + "'");
  try {
    return json::parse(*text);
  } catch (const json::exception& e) {
    throw StorageError("corrupt record '" + path.string() + "': " + e.what());
  }
}

std::vector<fs::path> json_files(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json" && !persist::is_temp_file(entry.path())) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

[[noreturn]] void unknown_device(const std::string& device_id) {
  throw NotFoundError("device '" + device_id + "' is not registered");
}

}  // namespace

Registry::Registry(RegistryConfig config) : config_(std::move(config)) {
  std::error_code ec;
  fs::create_directories(config_.data_dir, ec);
  if (ec || !fs::is_directory(config_.data_dir) || ::access(config_.data_dir.c_str(), W_OK | X_OK) != 0) {
    throw StorageError("data directory '" + config_.data_dir.string() + "' is not usable" +
                       (ec ? ": " + ec.message() : ""));
  }
  recover();
}

void Registry::recover() {
  const fs::path& root = config_.data_dir;
  persist::remove_stale_temps(root);

  // An artifact is committed once its manifest exists; the bundle is written first.
  std::error_code ec;
  if (fs::is_directory(root / "artifacts", ec)) {
    for (const auto& name_dir : fs::directory_iterator(root / "artifacts")) {
      if (!name_dir.is_directory()) continue;
      for (const auto& version_dir : fs::directory_iterator(name_dir.path())) {
        if (!version_dir.is_directory()) continue;
        const fs::path manifest_path = version_dir.path() / kManifestFile;
        if (!fs::exists(manifest_path) || !fs::exists(version_dir.path() / kBundleFile)) {
          spdlog::warn("removing incomplete upload {}", version_dir.path().string());
          fs::remove_all(version_dir.path(), ec);
          continue;
        }
        ArtifactManifest m = ArtifactManifest::from_json(read_json(manifest_path));
        artifacts_[{m.name, SemVer::parse(m.version)}] = std::move(m);
      }
    }
  }

  for (const auto& path : json_files(root / "devices")) {
    DeviceRecord d = read_json(path).get<DeviceRecord>();
    devices_[d.device_id] = std::move(d);
  }

  std::uint64_t max_seq = 0;
  for (const auto& path : json_files(root / "deployments")) {
    DeploymentRecord d = read_json(path).get<DeploymentRecord>();
    if (!is_legal_history(d.state_history)) {
      throw StorageError("deployment " + d.deployment_id + " has an illegal state history");
    }
    max_seq = std::max(max_seq, d.sequence);
    deployments_[d.deployment_id] = std::move(d);
  }
  next_deployment_ = max_seq + 1;

  // A rollback writes its new deployment before retiring the old one;
  // finish any retirement a crash interrupted.
  for (auto& [id, d] : deployments_) {
    if (!d.rollback_of) continue;
    auto it = deployments_.find(*d.rollback_of);
    if (it != deployments_.end() && it->second.state == DeploymentState::active) {
      DeploymentRecord& old = it->second;
      old.state = DeploymentState::rolled_back;
      old.state_history.push_back(
          {DeploymentState::rolled_back, std::max(now_ms(config_.clock), old.state_history.back().timestamp),
           "rolled back by " + id});
      persist_deployment(old);
    }
  }

  std::uint64_t max_measurement = 0;
  for (const auto& path : json_files(root / "measurements")) {
    measurements_.push_back(read_json(path).get<MeasurementRecord>());
    const std::string stem = path.stem().string();
    if (stem.size() > 2) max_measurement = std::max<std::uint64_t>(max_measurement, std::stoull(stem.substr(2)));
  }
  next_measurement_ = max_measurement + 1;

  for (const auto& path : json_files(root / "assets")) {
    AssetRecord a = read_json(path).get<AssetRecord>();
    assets_[a.asset_id] = std::move(a);
  }

  // Sample metadata is the commit marker for its image.
  if (fs::is_directory(root / "samples", ec)) {
    for (const auto& entry : fs::directory_iterator(root / "samples")) {
      const fs::path& p = entry.path();
      if (p.extension() == ".bin" && !fs::exists(fs::path(p).replace_extension(".json"))) fs::remove(p, ec);
    }
  }
  for (const auto& path : json_files(root / "samples")) {
    const json meta = read_json(path);
    sample_checksums_[meta.at("sample_id").get<std::string>()] = meta.at("sha256").get<std::string>();
  }

  derive_device_slots();
  spdlog::info("registry opened at {}: {} artifacts, {} devices, {} deployments", root.string(), artifacts_.size(),
               devices_.size(), deployments_.size());
}

// Device slots are a pure function of the deployment log: replaying every
// deployment that reached ACTIVE, oldest first, reproduces them.
void Registry::derive_device_slots() {
  for (auto& [id, device] : devices_) {
    device.active_artifact.reset();
    device.previous_artifact.reset();
  }
  std::vector<const DeploymentRecord*> ordered;
  for (const auto& [id, d] : deployments_) ordered.push_back(&d);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->sequence < b->sequence; });
  for (const DeploymentRecord* d : ordered) {
    auto it = devices_.find(d->device_id);
    if (it != devices_.end() && d->reached(DeploymentState::active)) apply_activation(it->second, *d);
  }
}

void Registry::apply_activation(DeviceRecord& device, const DeploymentRecord& d) const {
  if (d.kind == DeploymentKind::rollback) {
    device.active_artifact = d.artifact;
    device.previous_artifact.reset();
    return;
  }
  if (device.active_artifact && *device.active_artifact != d.artifact) device.previous_artifact = device.active_artifact;
  device.active_artifact = d.artifact;
}

std::mutex& Registry::device_mutex(const std::string& device_id) {
  std::lock_guard lock(device_locks_mutex_);
  auto& slot = device_locks_[device_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

DeviceRecord Registry::require_device(const std::string& device_id) const {
  std::shared_lock lock(mutex_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) unknown_device(device_id);
  return it->second;
}

std::optional<DeploymentRecord> Registry::in_flight_for(const std::string& device_id) const {
  std::shared_lock lock(mutex_);
  for (const auto& [id, d] : deployments_) {
    if (d.device_id == device_id && is_in_flight(d.state)) return d;
  }
  return std::nullopt;
}

fs::path Registry::artifact_dir(const ArtifactRef& ref) const {
  return config_.data_dir / "artifacts" / ref.name / ref.version;
}

void Registry::persist_deployment(const DeploymentRecord& d) {
  persist::atomic_write(config_.data_dir / "deployments" / (d.deployment_id + ".json"), json(d).dump());
}

void Registry::persist_device(const DeviceRecord& d) {
  json j = d;
  // Slots are derived from deployments on load.
  j.erase("active_artifact");
  j.erase("previous_artifact");
  persist::atomic_write(config_.data_dir / "devices" / (d.device_id + ".json"), j.dump());
}

UploadResult Registry::upload_artifact(std::span<const std::uint8_t> bundle) {
  const ArtifactManifest manifest = unpack(bundle).manifest;
  const ArtifactKey key{manifest.name, SemVer::parse(manifest.version)};
  std::lock_guard upload(upload_mutex_);
  {
    std::shared_lock lock(mutex_);
    auto it = artifacts_.find(key);
    if (it != artifacts_.end()) {
      if (it->second.checksum == manifest.checksum) return {it->second, false};
      throw ConflictError("artifact " + manifest.name + "@" + manifest.version +
                          " already exists with checksum " + it->second.checksum);
    }
  }
  const fs::path dir = artifact_dir({manifest.name, manifest.version});
  persist::atomic_write(dir / kBundleFile, bundle);
  persist::atomic_write(dir / kManifestFile, manifest.to_canonical_json());
  {
    std::unique_lock lock(mutex_);
    artifacts_[key] = manifest;
  }
  spdlog::info("stored artifact {}@{} ({} bytes)", manifest.name, manifest.version, bundle.size());
  return {manifest, true};
}

std::vector<ArtifactManifest> Registry::list_artifacts() const {
  std::shared_lock lock(mutex_);
  std::vector<ArtifactManifest> out;
  for (const auto& [key, m] : artifacts_) out.push_back(m);
  return out;
}

ArtifactManifest Registry::get_artifact(const ArtifactRef& ref) const {
  SemVer version;
  try {
    version = SemVer::parse(ref.version);
  } catch (const VersionError&) {
    throw NotFoundError("artifact " + ref.str() + " does not exist");
  }
  std::shared_lock lock(mutex_);
  auto it = artifacts_.find({ref.name, version});
  if (it == artifacts_.end()) throw NotFoundError("artifact " + ref.str() + " does not exist");
  return it->second;
}

Bytes Registry::download_artifact(const ArtifactRef& ref) const {
  const ArtifactManifest m = get_artifact(ref);
  auto bytes = persist::read_file(artifact_dir({m.name, m.version}) / kBundleFile);
  if (!bytes) throw StorageError("bundle for " + ref.str() + " is missing from the store");
  return std::move(*bytes);
}

DeviceRecord Registry::register_device(const std::string& device_id, const std::string& hardware_profile) {
  require_safe_identifier(device_id, "device id");
  std::lock_guard device_lock(device_mutex(device_id));
  const TimePoint now = now_ms(config_.clock);
  DeviceRecord d;
  {
    std::shared_lock lock(mutex_);
    auto it = devices_.find(device_id);
    if (it != devices_.end()) {
      d = it->second;
    } else {
      d.device_id = device_id;
      d.registered_at = now;
    }
  }
  d.hardware_profile = hardware_profile;
  d.last_heartbeat = std::max(now, d.registered_at);
  persist_device(d);
  std::unique_lock lock(mutex_);
  devices_[device_id] = d;
  return d;
}

DeviceRecord Registry::heartbeat(const std::string& device_id) {
  std::lock_guard device_lock(device_mutex(device_id));
  DeviceRecord d = require_device(device_id);
  d.last_heartbeat = std::max(now_ms(config_.clock), d.registered_at);
  persist_device(d);
  std::unique_lock lock(mutex_);
  devices_[device_id] = d;
  return d;
}

DeviceStatus Registry::status_of(const DeviceRecord& device) const {
  const auto age = config_.clock() - device.last_heartbeat;
  if (age > config_.offline_after) return DeviceStatus::offline;
  if (age > config_.stale_after) return DeviceStatus::stale;
  return DeviceStatus::online;
}

std::vector<DeviceView> Registry::list_devices() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, const DeploymentRecord*> latest;
  for (const auto& [id, d] : deployments_) {
    auto& slot = latest[d.device_id];
    if (!slot || slot->sequence < d.sequence) slot = &d;
  }
  std::vector<DeviceView> out;
  for (const auto& [id, device] : devices_) {
    DeviceView v{device, status_of(device), std::nullopt, std::nullopt};
    if (auto it = latest.find(id); it != latest.end()) {
      v.latest_deployment_id = it->second->deployment_id;
      v.latest_deployment_state = it->second->state;
    }
    out.push_back(std::move(v));
  }
  return out;
}

DeviceView Registry::get_device(const std::string& device_id) const {
  for (DeviceView& v : list_devices()) {
    if (v.record.device_id == device_id) return std::move(v);
  }
  unknown_device(device_id);
}

DeploymentRecord Registry::new_deployment(const std::string& device_id, const ArtifactRef& artifact,
                                          DeploymentKind kind, std::optional<std::string> rollback_of) {
  DeploymentRecord d;
  d.sequence = next_deployment_.fetch_add(1);
  d.deployment_id = sequence_id("dep-", d.sequence, 6);
  d.device_id = device_id;
  d.artifact = artifact;
  d.kind = kind;
  d.rollback_of = std::move(rollback_of);
  d.created_at = now_ms(config_.clock);
  d.state = DeploymentState::pending;
  d.state_history.push_back({DeploymentState::pending, d.created_at,
                             kind == DeploymentKind::install ? "created" : "rollback to " + artifact.str()});
  return d;
}

DeploymentRecord Registry::create_deployment(const std::string& device_id, const ArtifactRef& artifact) {
  std::lock_guard device_lock(device_mutex(device_id));
  require_device(device_id);
  get_artifact(artifact);
  if (auto busy = in_flight_for(device_id)) {
    throw ConflictError("device '" + device_id + "' already has deployment " + busy->deployment_id + " in state " +
                        std::string(to_string(busy->state)));
  }
  DeploymentRecord d = new_deployment(device_id, artifact, DeploymentKind::install, std::nullopt);
  persist_deployment(d);
  std::unique_lock lock(mutex_);
  deployments_[d.deployment_id] = d;
  return d;
}

DeploymentRecord Registry::get_deployment(const std::string& deployment_id) const {
  std::shared_lock lock(mutex_);
  auto it = deployments_.find(deployment_id);
  if (it == deployments_.end()) throw NotFoundError("deployment '" + deployment_id + "' does not exist");
  return it->second;
}

std::vector<DeploymentRecord> Registry::list_deployments(const std::optional<std::string>& device_id) const {
  if (device_id) require_device(*device_id);
  std::shared_lock lock(mutex_);
  std::vector<DeploymentRecord> out;
  for (const auto& [id, d] : deployments_) {
    if (!device_id || d.device_id == *device_id) out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
  return out;
}

std::vector<Command> Registry::poll_commands(const std::string& device_id) {
  std::lock_guard device_lock(device_mutex(device_id));
  DeviceRecord device = require_device(device_id);
  device.last_heartbeat = std::max(now_ms(config_.clock), device.registered_at);
  persist_device(device);
  {
    std::unique_lock lock(mutex_);
    devices_[device_id].last_heartbeat = device.last_heartbeat;
  }

  auto work = in_flight_for(device_id);
  if (!work) return {};
  DeploymentRecord d = std::move(*work);
  if (d.state == DeploymentState::pending) {
    d.state = DeploymentState::delivered;
    d.state_history.push_back(
        {DeploymentState::delivered, std::max(now_ms(config_.clock), d.state_history.back().timestamp), ""});
    persist_deployment(d);
    std::unique_lock lock(mutex_);
    deployments_[d.deployment_id] = d;
  }
  const CommandKind kind = d.kind == DeploymentKind::install ? CommandKind::install : CommandKind::rollback;
  return {Command{kind, d.deployment_id, d.artifact, get_artifact(d.artifact).checksum}};
}

DeploymentRecord Registry::report_status(const std::string& deployment_id, DeploymentState new_state,
                                         const std::string& detail) {
  if (new_state != DeploymentState::installing && new_state != DeploymentState::active &&
      new_state != DeploymentState::failed) {
    throw BadRequestError("devices may only report INSTALLING, ACTIVE or FAILED, not " +
                          std::string(to_string(new_state)));
  }
  const std::string device_id = get_deployment(deployment_id).device_id;
  std::lock_guard device_lock(device_mutex(device_id));
  DeploymentRecord d = get_deployment(deployment_id);
  if (d.state == new_state) return d;
  if (!is_legal_transition(d.state, new_state)) {
    throw StateError("deployment " + deployment_id + " is " + std::string(to_string(d.state)) + "; cannot move to " +
                     std::string(to_string(new_state)));
  }
  d.state = new_state;
  d.state_history.push_back({new_state, std::max(now_ms(config_.clock), d.state_history.back().timestamp), detail});
  persist_deployment(d);

  std::unique_lock lock(mutex_);
  deployments_[deployment_id] = d;
  if (new_state == DeploymentState::active) {
    auto it = devices_.find(device_id);
    if (it != devices_.end()) apply_activation(it->second, d);
  }
  return d;
}

DeploymentRecord Registry::rollback(const std::string& device_id) {
  std::lock_guard device_lock(device_mutex(device_id));
  const DeviceRecord device = require_device(device_id);
  if (auto busy = in_flight_for(device_id)) {
    throw ConflictError("device '" + device_id + "' already has deployment " + busy->deployment_id + " in state " +
                        std::string(to_string(busy->state)));
  }
  if (!device.previous_artifact) {
    throw PreconditionError("nothing to roll back to: device '" + device_id + "' has no previous version");
  }

  std::optional<DeploymentRecord> current;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, d] : deployments_) {
      if (d.device_id == device_id && d.state == DeploymentState::active &&
          (!current || current->sequence < d.sequence)) {
        current = d;
      }
    }
  }

  DeploymentRecord next = new_deployment(device_id, *device.previous_artifact, DeploymentKind::rollback,
                                         current ? std::optional(current->deployment_id) : std::nullopt);
  persist_deployment(next);
  {
    std::unique_lock lock(mutex_);
    deployments_[next.deployment_id] = next;
  }
  if (current) {
    current->state = DeploymentState::rolled_back;
    current->state_history.push_back({DeploymentState::rolled_back,
                                      std::max(next.created_at, current->state_history.back().timestamp),
                                      "rolled back by " + next.deployment_id});
    persist_deployment(*current);
    std::unique_lock lock(mutex_);
    deployments_[current->deployment_id] = *current;
  }
  return next;
}

void Registry::ingest_measurement(const MeasurementRecord& m) {
  m.validate();
  require_device(m.device_id);
  MeasurementRecord stored = m;
  stored.timestamp = truncate_ms(m.timestamp);
  const std::uint64_t seq = next_measurement_.fetch_add(1);
  persist::atomic_write(config_.data_dir / "measurements" / (sequence_id("m-", seq, 10) + ".json"),
                        json(stored).dump());
  std::unique_lock lock(mutex_);
  measurements_.push_back(std::move(stored));
}

AssetUpdateResult Registry::ingest_condition_update(const vqi::AssetConditionUpdate& update) {
  require_safe_identifier(update.asset_id, "asset id");
  if (!(update.confidence >= 0.0 && update.confidence <= 1.0)) {
    throw BadRequestError("confidence must lie in [0, 1]");
  }
  require_device(update.device_id);
  AssetRecord record{update.asset_id,   update.asset_type, update.condition,    update.label, update.confidence,
                     truncate_ms(update.timestamp), update.device_id, update.model_version};

  std::lock_guard store(asset_mutex_);
  {
    std::shared_lock lock(mutex_);
    auto it = assets_.find(update.asset_id);
    // Last writer wins by timestamp; ties go to the newcomer.
    if (it != assets_.end() && record.last_update < it->second.last_update) return {it->second, false};
  }
  persist::atomic_write(config_.data_dir / "assets" / (record.asset_id + ".json"), json(record).dump());
  std::unique_lock lock(mutex_);
  assets_[record.asset_id] = record;
  return {record, true};
}

void Registry::ingest_training_sample(const TrainingSample& sample) {
  require_safe_identifier(sample.sample_id, "sample id");
  require_device(sample.device_id);
  if (sample.image.empty()) throw BadRequestError("training sample '" + sample.sample_id + "' has no image bytes");
  const std::string checksum = sha256_hex(sample.image);

  std::lock_guard store(asset_mutex_);
  {
    std::shared_lock lock(mutex_);
    auto it = sample_checksums_.find(sample.sample_id);
    if (it != sample_checksums_.end()) {
      if (it->second == checksum) return;
      throw ConflictError("training sample '" + sample.sample_id + "' already exists with different content");
    }
  }
  const fs::path dir = config_.data_dir / "samples";
  persist::atomic_write(dir / (sample.sample_id + ".bin"), sample.image);
  json meta{{"sample_id", sample.sample_id},
            {"label", sample.label ? json(*sample.label) : json(nullptr)},
            {"device_id", sample.device_id},
            {"captured_at", format_utc(sample.captured_at)},
            {"sha256", checksum},
            {"byte_size", sample.image.size()}};
  persist::atomic_write(dir / (sample.sample_id + ".json"), meta.dump());
  std::unique_lock lock(mutex_);
  sample_checksums_[sample.sample_id] = checksum;
}

std::vector<AssetRecord> Registry::list_assets() const {
  std::shared_lock lock(mutex_);
  std::vector<AssetRecord> out;
  for (const auto& [id, a] : assets_) out.push_back(a);
  return out;
}

std::vector<std::string> Registry::list_sample_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, sum] : sample_checksums_) out.push_back(id);
  return out;
}

TrainingSample Registry::get_training_sample(const std::string& sample_id) const {
  {
    std::shared_lock lock(mutex_);
    if (!sample_checksums_.count(sample_id)) throw NotFoundError("training sample '" + sample_id + "' does not exist");
  }
  const fs::path dir = config_.data_dir / "samples";
  const json meta = read_json(dir / (sample_id + ".json"));
  auto image = persist::read_file(dir / (sample_id + ".bin"));
  if (!image) throw StorageError("image for training sample '" + sample_id + "' is missing");
  TrainingSample s;
  s.sample_id = sample_id;
  s.image = std::move(*image);
  if (!meta.at("label").is_null()) s.label = meta.at("label").get<std::string>();
  s.device_id = meta.at("device_id").get<std::string>();
  s.captured_at = parse_utc(meta.at("captured_at").get<std::string>());
  return s;
}

MetricsSummary Registry::metrics_summary(const std::optional<std::string>& device_id,
                                         const std::optional<std::string>& version) const {
  if (device_id) require_device(*device_id);
  std::vector<double> latencies;
  std::shared_lock lock(mutex_);
  for (const MeasurementRecord& m : measurements_) {
    if (device_id && m.device_id != *device_id) continue;
    if (version && m.model_version != *version) continue;
    latencies.push_back(m.inference_latency_ms);
  }
  return summarize_latencies(std::move(latencies));
}

}  // namespace emlops
