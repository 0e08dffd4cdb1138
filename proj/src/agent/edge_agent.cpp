#include "emlops/edge_agent.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "emlops/errors.hpp"
#include "emlops/persistence.hpp"

namespace emlops {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStateFile = "state.json";

fs::path relative_bundle_path(const ArtifactRef& ref) {
  return fs::path("artifacts") / ref.name / ref.version / "bundle.emlm";
}

json slot_json(const std::optional<InstalledArtifact>& slot) {
  if (!slot) return nullptr;
  return json{{"name", slot->manifest.name}, {"version", slot->manifest.version}, {"path", slot->path.string()}};
}

}  // namespace

std::chrono::milliseconds Backoff::next() {
  const auto delay = next_;
  next_ = std::min(cap_, next_ * 2);
  return delay;
}

EdgeAgent::EdgeAgent(AgentConfig config, RegistryApi& api) : config_(std::move(config)), api_(api) {
  require_safe_identifier(config_.device_id, "device id");
  if (config_.install_root.empty()) throw ConfigError("agent needs an install root");
  std::error_code ec;
  fs::create_directories(config_.install_root, ec);
  if (ec) throw ConfigError("cannot create install root '" + config_.install_root.string() + "': " + ec.message());
  persist::remove_stale_temps(config_.install_root);
  load_state();
}

std::optional<InstalledArtifact> EdgeAgent::load_slot(const json& slot) const {
  if (slot.is_null()) return std::nullopt;
  const ArtifactRef ref{slot.at("name").get<std::string>(), slot.at("version").get<std::string>()};
  const fs::path path = slot.at("path").get<std::string>();
  auto bytes = persist::read_file(config_.install_root / path);
  if (!bytes) {
    spdlog::error("[{}] bundle for {} is missing; not serving it", config_.device_id, ref.str());
    return std::nullopt;
  }
  try {
    auto loaded = std::make_shared<const vqi::LoadedArtifact>(vqi::LoadedArtifact::from_bundle(*bytes));
    if (loaded->manifest.name != ref.name || loaded->manifest.version != ref.version) {
      throw IntegrityError("bundle holds " + loaded->manifest.name + "@" + loaded->manifest.version);
    }
    return InstalledArtifact{loaded->manifest, path, std::move(loaded)};
  } catch (const Error& e) {
    spdlog::error("[{}] bundle for {} failed verification; not serving it: {}", config_.device_id, ref.str(),
                  e.what());
    return std::nullopt;
  }
}

void EdgeAgent::load_state() {
  auto text = persist::read_text(config_.install_root / kStateFile);
  if (!text) return;
  json j;
  try {
    j = json::parse(*text);
  } catch (const json::exception& e) {
    throw StorageError("corrupt agent state in '" + config_.install_root.string() + "': " + e.what());
  }
  State s;
  s.active = load_slot(j.value("active", json(nullptr)));
  s.previous = load_slot(j.value("previous", json(nullptr)));
  if (j.contains("current_deployment") && !j.at("current_deployment").is_null()) {
    s.current_deployment = j.at("current_deployment").get<std::string>();
  }
  const json completed = j.value("completed", json::object());
  for (const auto& [id, state] : completed.items()) {
    s.completed[id] = parse_deployment_state(state.get<std::string>());
  }
  std::lock_guard lock(state_mutex_);
  state_ = std::move(s);
}

void EdgeAgent::persist(const State& s) {
  json completed = json::object();
  for (const auto& [id, state] : s.completed) completed[id] = to_string(state);
  const json j{{"device_id", config_.device_id},
               {"active", slot_json(s.active)},
               {"previous", slot_json(s.previous)},
               {"current_deployment", s.current_deployment ? json(*s.current_deployment) : json(nullptr)},
               {"completed", completed}};
  persist::atomic_write(config_.install_root / kStateFile, j.dump(2));
}

void EdgeAgent::register_with_registry() {
  api_.register_device(config_.device_id, config_.hardware_profile);
  spdlog::info("[{}] registered", config_.device_id);
}

std::size_t EdgeAgent::poll_once() {
  const std::vector<Command> commands = api_.poll_commands(config_.device_id);
  for (const Command& c : commands) handle(c);
  return commands.size();
}

void EdgeAgent::run(std::stop_token stop) {
  Backoff backoff(config_.backoff_base, config_.backoff_cap);
  bool registered = false;
  while (!stop.stop_requested()) {
    std::chrono::milliseconds delay = config_.poll_interval;
    try {
      if (!registered) {
        register_with_registry();
        registered = true;
      }
      poll_once();
      backoff.reset();
    } catch (const NotFoundError& e) {
      // The registry no longer knows this device; register again.
      spdlog::warn("[{}] {}", config_.device_id, e.what());
      registered = false;
      delay = backoff.next();
    } catch (const std::exception& e) {
      spdlog::warn("[{}] registry call failed: {}", config_.device_id, e.what());
      delay = backoff.next();
    }
    std::unique_lock lock(wait_mutex_);
    wake_.wait_for(lock, stop, delay, [] { return false; });
  }
}

DeploymentState EdgeAgent::handle(const Command& command) {
  std::lock_guard guard(command_mutex_);
  std::optional<DeploymentState> done;
  {
    std::lock_guard lock(state_mutex_);
    if (auto it = state_.completed.find(command.deployment_id); it != state_.completed.end()) done = it->second;
  }
  if (done) return replay(command, *done);
  return command.kind == CommandKind::install ? install(command) : rollback_local(command);
}

void EdgeAgent::report(const Command& command, DeploymentState state, const std::string& detail) {
  try {
    api_.report_status(command.deployment_id, state, detail);
  } catch (const StateError& e) {
    // The registry already moved past this state.
    spdlog::info("[{}] {}", config_.device_id, e.what());
  }
}

DeploymentState EdgeAgent::replay(const Command& command, DeploymentState terminal) {
  spdlog::info("[{}] {} already {}; re-reporting", config_.device_id, command.deployment_id, to_string(terminal));
  if (terminal == DeploymentState::active) report(command, DeploymentState::installing, "replayed");
  report(command, terminal, "replayed");
  return terminal;
}

void EdgeAgent::begin(const Command& command) {
  State next;
  {
    std::lock_guard lock(state_mutex_);
    next = state_;
  }
  if (next.current_deployment != command.deployment_id) {
    next.current_deployment = command.deployment_id;
    persist(next);
    std::lock_guard lock(state_mutex_);
    state_.current_deployment = command.deployment_id;
  }
  report(command, DeploymentState::installing, "");
}

DeploymentState EdgeAgent::activate(const Command& command, State next) {
  next.current_deployment.reset();
  next.completed[command.deployment_id] = DeploymentState::active;
  persist(next);
  {
    std::lock_guard lock(state_mutex_);
    state_ = std::move(next);
  }
  spdlog::info("[{}] {} active", config_.device_id, command.artifact.str());
  report(command, DeploymentState::active, "");
  return DeploymentState::active;
}

DeploymentState EdgeAgent::fail(const Command& command, const std::string& detail) {
  State next;
  {
    std::lock_guard lock(state_mutex_);
    next = state_;
  }
  next.current_deployment.reset();
  next.completed[command.deployment_id] = DeploymentState::failed;
  persist(next);
  {
    std::lock_guard lock(state_mutex_);
    state_ = std::move(next);
  }
  spdlog::warn("[{}] {} failed: {}", config_.device_id, command.deployment_id, detail);
  report(command, DeploymentState::failed, detail);
  return DeploymentState::failed;
}

DeploymentState EdgeAgent::install(const Command& command) {
  begin(command);
  return install_download(command);
}

DeploymentState EdgeAgent::install_download(const Command& command) {
  const Bytes bundle = api_.download_artifact(command.artifact);
  std::shared_ptr<const vqi::LoadedArtifact> loaded;
  try {
    loaded = std::make_shared<const vqi::LoadedArtifact>(vqi::LoadedArtifact::from_bundle(bundle));
    const ArtifactManifest& m = loaded->manifest;
    if (m.name != command.artifact.name || m.version != command.artifact.version) {
      throw IntegrityError("downloaded bundle holds " + m.name + "@" + m.version + ", expected " +
                           command.artifact.str());
    }
    if (!command.checksum.empty() && m.checksum != command.checksum) {
      throw IntegrityError("checksum " + m.checksum + " does not match the expected " + command.checksum);
    }
  } catch (const Error& e) {
    return fail(command, e.what());
  }

  State next;
  {
    std::lock_guard lock(state_mutex_);
    next = state_;
  }
  const ArtifactRef ref = command.artifact;
  if (next.active && next.active->ref() == ref && next.active->manifest == loaded->manifest) {
    return activate(command, std::move(next));
  }
  const fs::path rel = relative_bundle_path(ref);
  try {
    persist::atomic_write(config_.install_root / rel, bundle);
  } catch (const StorageError& e) {
    return fail(command, e.what());
  }
  if (next.active && next.active->ref() != ref) next.previous = std::move(next.active);
  next.active = InstalledArtifact{loaded->manifest, rel, loaded};
  if (next.previous && next.previous->ref() == ref) next.previous.reset();
  return activate(command, std::move(next));
}

DeploymentState EdgeAgent::rollback_local(const Command& command) {
  begin(command);
  State next;
  {
    std::lock_guard lock(state_mutex_);
    next = state_;
  }
  if (next.active && next.active->ref() == command.artifact) return activate(command, std::move(next));
  if (!next.previous) return fail(command, "no previous version");
  if (next.previous->ref() != command.artifact) {
    spdlog::info("[{}] rollback target {} is not the local previous version; downloading", config_.device_id,
                 command.artifact.str());
    return install_download(command);
  }
  std::swap(next.active, next.previous);
  return activate(command, std::move(next));
}

std::shared_ptr<const vqi::LoadedArtifact> EdgeAgent::active_model() const {
  std::lock_guard lock(state_mutex_);
  return state_.active ? state_.active->loaded : nullptr;
}

AgentStatus EdgeAgent::status() const {
  std::lock_guard lock(state_mutex_);
  AgentStatus s{config_.device_id, std::nullopt, std::nullopt, state_.current_deployment};
  if (state_.active) s.active = state_.active->manifest;
  if (state_.previous) s.previous = state_.previous->manifest;
  return s;
}

void EdgeAgent::forward_sample(std::span<const std::uint8_t> image, const std::string& reason) {
  if (!config_.forward_samples || image.empty()) return;
  TrainingSample sample;
  sample.sample_id = config_.device_id + "-" + sha256_hex(image).substr(0, 16);
  sample.image.assign(image.begin(), image.end());
  sample.device_id = config_.device_id;
  sample.captured_at = now_ms(config_.clock);
  try {
    api_.ingest_training_sample(sample);
    spdlog::info("[{}] forwarded sample {} ({})", config_.device_id, sample.sample_id, reason);
  } catch (const std::exception& e) {
    spdlog::warn("[{}] could not forward sample: {}", config_.device_id, e.what());
  }
}

InferenceOutcome EdgeAgent::infer(std::span<const std::uint8_t> image, const std::string& asset_id,
                                  const std::string& asset_type) {
  const auto model = active_model();
  if (!model) throw UnavailableError("no model is active on device '" + config_.device_id + "'");

  InferenceOutcome out;
  try {
    out.result = vqi::run_pipeline(*model, image);
  } catch (const InputError&) {
    forward_sample(image, "undecodable");
    throw;
  }
  if (out.result.condition == Condition::unknown) forward_sample(image, "low confidence");

  const TimePoint now = now_ms(config_.clock);
  out.update.asset_id = asset_id.empty() ? vqi::default_asset_id(image) : asset_id;
  out.update.asset_type = asset_type.empty() ? config_.default_asset_type : asset_type;
  out.update.label = out.result.prediction.label;
  out.update.condition = out.result.condition;
  out.update.confidence = out.result.prediction.confidence;
  out.update.model_version = out.result.model_version;
  out.update.device_id = config_.device_id;
  out.update.timestamp = now;

  out.measurement.device_id = config_.device_id;
  out.measurement.model_version = out.result.model_version;
  out.measurement.timestamp = now;
  out.measurement.inference_latency_ms = out.result.latency_ms;
  out.measurement.op_counters = out.result.counters;
  out.measurement.predicted_label = out.result.prediction.label;
  out.measurement.confidence = out.result.prediction.confidence;

  try {
    api_.ingest_condition_update(out.update);
    api_.ingest_measurement(out.measurement);
  } catch (const std::exception& e) {
    spdlog::warn("[{}] could not push inference telemetry: {}", config_.device_id, e.what());
  }
  return out;
}

}  // namespace emlops
