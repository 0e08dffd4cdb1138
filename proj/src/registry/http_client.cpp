#include <httplib.h>

#include "emlops/errors.hpp"
#include "emlops/registry_api.hpp"

namespace emlops {

using nlohmann::json;

namespace {

std::string query_string(const std::vector<std::pair<std::string, std::optional<std::string>>>& params) {
  std::string out;
  for (const auto& [key, value] : params) {
    if (!value) continue;
    out += out.empty() ? "?" : "&";
    out += key + "=" + httplib::detail::encode_query_param(*value);
  }
  return out;
}

}  // namespace

HttpRegistryClient::HttpRegistryClient(std::string base_url, std::optional<std::string> token,
                                       std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), token_(std::move(token)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.rfind("http://", 0) != 0) throw ConfigError("registry URL must start with http://: " + base_url_);
}

HttpRegistryClient::Response HttpRegistryClient::send(const std::string& method, const std::string& path,
                                                      const std::string& body, const std::string& content_type) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);

  httplib::Request req;
  req.method = method;
  req.path = path;
  if (token_) req.set_header("Authorization", "Bearer " + *token_);
  if (!body.empty() || method == "POST") {
    req.body = body;
    req.set_header("Content-Type", content_type);
  }
  httplib::Result result = client.send(req);
  if (!result) {
    throw TransportError(method + " " + base_url_ + path + " failed: " + httplib::to_string(result.error()));
  }
  Response res{result->status, result->body};
  if (res.status >= 200 && res.status < 300) return res;

  std::string kind = "error";
  std::string detail = res.body;
  try {
    const json j = json::parse(res.body);
    kind = j.value("error", kind);
    detail = j.value("detail", detail);
  } catch (const json::exception&) {
  }
  if (res.status == 401) throw ConfigError("registry rejected credentials: " + detail);
  throw_error_of_kind(kind, detail);
}

json HttpRegistryClient::call(const std::string& method, const std::string& path, const json& body) {
  const Response res = send(method, path, body.is_null() ? "" : body.dump(), "application/json");
  if (res.body.empty()) return nullptr;
  try {
    return json::parse(res.body);
  } catch (const json::exception& e) {
    throw TransportError(method + " " + path + " returned malformed JSON: " + e.what());
  }
}

DeviceRecord HttpRegistryClient::register_device(const std::string& device_id, const std::string& hardware_profile) {
  return call("POST", "/api/devices", json{{"device_id", device_id}, {"hardware_profile", hardware_profile}})
      .get<DeviceRecord>();
}

DeviceRecord HttpRegistryClient::heartbeat(const std::string& device_id) {
  return call("POST", "/api/devices/" + device_id + "/heartbeat", json::object()).get<DeviceRecord>();
}

std::vector<Command> HttpRegistryClient::poll_commands(const std::string& device_id) {
  return call("GET", "/api/devices/" + device_id + "/commands").get<std::vector<Command>>();
}

Bytes HttpRegistryClient::download_artifact(const ArtifactRef& ref) {
  const Response res = send("GET", "/api/artifacts/" + ref.name + "/" + ref.version + "/download", "", "");
  return Bytes(res.body.begin(), res.body.end());
}

DeploymentRecord HttpRegistryClient::report_status(const std::string& deployment_id, DeploymentState state,
                                                   const std::string& detail) {
  return call("POST", "/api/deployments/" + deployment_id + "/status",
              json{{"state", to_string(state)}, {"detail", detail}})
      .get<DeploymentRecord>();
}

void HttpRegistryClient::ingest_measurement(const MeasurementRecord& m) { call("POST", "/api/measurements", m); }

void HttpRegistryClient::ingest_condition_update(const vqi::AssetConditionUpdate& update) {
  call("POST", "/api/assets/updates", update);
}

void HttpRegistryClient::ingest_training_sample(const TrainingSample& sample) { call("POST", "/api/samples", sample); }

ArtifactManifest HttpRegistryClient::upload_artifact(const Bytes& bundle) {
  const Response res =
      send("POST", "/api/artifacts", std::string(bundle.begin(), bundle.end()), "application/octet-stream");
  return ArtifactManifest::from_json(json::parse(res.body));
}

std::vector<ArtifactManifest> HttpRegistryClient::list_artifacts() {
  std::vector<ArtifactManifest> out;
  for (const json& m : call("GET", "/api/artifacts")) out.push_back(ArtifactManifest::from_json(m));
  return out;
}

std::vector<DeviceView> HttpRegistryClient::list_devices() {
  return call("GET", "/api/devices").get<std::vector<DeviceView>>();
}

DeploymentRecord HttpRegistryClient::create_deployment(const std::string& device_id, const ArtifactRef& artifact) {
  return call("POST", "/api/deployments", json{{"device_id", device_id}, {"artifact", artifact}})
      .get<DeploymentRecord>();
}

DeploymentRecord HttpRegistryClient::get_deployment(const std::string& deployment_id) {
  return call("GET", "/api/deployments/" + deployment_id).get<DeploymentRecord>();
}

std::vector<DeploymentRecord> HttpRegistryClient::list_deployments(const std::optional<std::string>& device_id) {
  return call("GET", "/api/deployments" + query_string({{"device", device_id}})).get<std::vector<DeploymentRecord>>();
}

DeploymentRecord HttpRegistryClient::rollback(const std::string& device_id) {
  return call("POST", "/api/devices/" + device_id + "/rollback", json::object()).get<DeploymentRecord>();
}

std::vector<AssetRecord> HttpRegistryClient::list_assets() {
  return call("GET", "/api/assets").get<std::vector<AssetRecord>>();
}

MetricsSummary HttpRegistryClient::metrics_summary(const std::optional<std::string>& device_id,
                                                   const std::optional<std::string>& version) {
  return call("GET", "/api/metrics" + query_string({{"device", device_id}, {"version", version}}))
      .get<MetricsSummary>();
}

}  // namespace emlops
