#include "emlops/registry_server.hpp"

#include <cstring>
#include <functional>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "emlops/errors.hpp"

namespace emlops {

using nlohmann::json;

namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const char* kind, const std::string& detail) {
  send_json(res, status, json{{"error", kind}, {"detail", detail}});
}

// Maps every failure onto the {"error", "detail"} body.
Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.kind()), e.kind(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", std::string("malformed request body: ") + e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) throw BadRequestError("request body is empty");
  return json::parse(req.body);
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  std::string v = req.get_param_value(key);
  if (v.empty()) return std::nullopt;
  return v;
}

}  // namespace

int http_status_for(const char* kind) {
  const std::string k(kind);
  if (k == "not_found") return 404;
  if (k == "conflict" || k == "state") return 409;
  if (k == "precondition") return 412;
  if (k == "integrity") return 422;
  if (k == "bad_request" || k == "parse" || k == "manifest" || k == "version" || k == "input" ||
      k == "invalid_data" || k == "dimension") {
    return 400;
  }
  if (k == "unavailable") return 503;
  return 500;
}

RegistryServer::RegistryServer(Registry& registry, std::optional<std::string> token)
    : registry_(registry), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

RegistryServer::~RegistryServer() { stop(); }

std::string RegistryServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

void RegistryServer::install_routes() {
  httplib::Server& s = *server_;
  Registry& r = registry_;

  s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    if (req.method == "OPTIONS") {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
      res.status = 204;
      return httplib::Server::HandlerResponse::Handled;
    }
    if (token_ && req.get_header_value("Authorization") != "Bearer " + *token_) {
      send_error(res, 401, "unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  s.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });

  s.Post("/api/artifacts", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
           const UploadResult result = r.upload_artifact(std::span(data, req.body.size()));
           send_json(res, result.created ? 201 : 200, result.manifest);
         }));
  s.Get("/api/artifacts", guarded([&r](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, r.list_artifacts());
        }));
  s.Get(R"(/api/artifacts/([^/]+)/([^/]+)/download)",
        guarded([&r](const httplib::Request& req, httplib::Response& res) {
          const Bytes bundle = r.download_artifact({req.matches[1], req.matches[2]});
          res.status = 200;
          res.set_content(reinterpret_cast<const char*>(bundle.data()), bundle.size(), "application/octet-stream");
        }));

  s.Post("/api/devices", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const std::string id = body.at("device_id").get<std::string>();
           bool existed = true;
           try {
             r.get_device(id);
           } catch (const NotFoundError&) {
             existed = false;
           }
           const DeviceRecord d = r.register_device(id, body.value("hardware_profile", ""));
           send_json(res, existed ? 200 : 201, r.get_device(d.device_id));
         }));
  s.Get("/api/devices", guarded([&r](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, r.list_devices());
        }));
  s.Get(R"(/api/devices/([^/]+))", guarded([&r](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, r.get_device(req.matches[1]));
        }));
  s.Post(R"(/api/devices/([^/]+)/heartbeat)", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           r.heartbeat(req.matches[1]);
           send_json(res, 200, r.get_device(req.matches[1]));
         }));
  s.Get(R"(/api/devices/([^/]+)/commands)", guarded([&r](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, r.poll_commands(req.matches[1]));
        }));
  s.Post(R"(/api/devices/([^/]+)/rollback)", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 201, r.rollback(req.matches[1]));
         }));

  s.Post("/api/deployments", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           send_json(res, 201,
                     r.create_deployment(body.at("device_id").get<std::string>(), body.at("artifact").get<ArtifactRef>()));
         }));
  s.Get("/api/deployments", guarded([&r](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, r.list_deployments(query(req, "device")));
        }));
  s.Get(R"(/api/deployments/([^/]+))", guarded([&r](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, r.get_deployment(req.matches[1]));
        }));
  s.Post(R"(/api/deployments/([^/]+)/status)", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const DeploymentState state = parse_deployment_state(body.at("state").get<std::string>());
           send_json(res, 200, r.report_status(req.matches[1], state, body.value("detail", "")));
         }));

  s.Post("/api/measurements", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           r.ingest_measurement(parse_body(req).get<MeasurementRecord>());
           send_json(res, 202, json{{"status", "accepted"}});
         }));
  s.Post("/api/assets/updates", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           const AssetUpdateResult result = r.ingest_condition_update(parse_body(req).get<vqi::AssetConditionUpdate>());
           send_json(res, 200, json{{"applied", result.applied}, {"asset", result.asset}});
         }));
  s.Get("/api/assets", guarded([&r](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, r.list_assets());
        }));
  s.Post("/api/samples", guarded([&r](const httplib::Request& req, httplib::Response& res) {
           const TrainingSample sample = parse_body(req).get<TrainingSample>();
           r.ingest_training_sample(sample);
           send_json(res, 201, json{{"sample_id", sample.sample_id}});
         }));
  s.Get("/api/samples", guarded([&r](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, r.list_sample_ids());
        }));

  s.Get("/api/metrics", guarded([&r](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, r.metrics_summary(query(req, "device"), query(req, "version")));
        }));
}

int RegistryServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  spdlog::info("registry listening on {}", url());
  return port_;
}

void RegistryServer::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->bind_to_port(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  spdlog::info("registry listening on {}", url());
  server_->listen_after_bind();
}

void RegistryServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace emlops
