// emlops: train, quantize, package, distribute and run edge inference models.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "emlops/agent_server.hpp"
#include "emlops/benchmark.hpp"
#include "emlops/errors.hpp"
#include "emlops/persistence.hpp"
#include "emlops/registry_api.hpp"
#include "emlops/registry_server.hpp"
#include "emlops/toolkit.hpp"
#include "emlops/toy.hpp"
#include "emlops/vqi.hpp"

namespace {

using namespace emlops;
using nlohmann::json;
namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

struct Globals {
  std::string registry_url = "http://127.0.0.1:8080";
  std::optional<std::string> token;
  bool json_output = false;
  std::uint64_t seed = 42;
  std::string log_level = "info";
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::pair<std::string, int> split_host_port(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw UsageError("listen address must be host:port, got '" + listen + "'");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("bad port in '" + listen + "'");
  }
}

Bytes read_bundle(const std::string& path) {
  auto bytes = persist::read_file(path);
  if (!bytes) throw UsageError("cannot read '" + path + "'");
  return std::move(*bytes);
}

void write_bytes(const std::string& path, const Bytes& bytes) { persist::atomic_write(path, bytes); }

std::string optional_ref(const std::optional<ArtifactRef>& r) { return r ? r->str() : "-"; }

void print(const Globals& g, const json& j, const std::string& text) {
  if (g.json_output) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

std::string manifest_line(const ArtifactManifest& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %-10s %-13s %10llu  %.12s  %s\n", m.name.c_str(), m.version.c_str(),
                std::string(to_string(m.precision)).c_str(), static_cast<unsigned long long>(m.byte_size),
                m.checksum.c_str(), m.created_at.c_str());
  return buf;
}

json summary_json(const ArtifactManifest& m, const std::string& path, std::size_t bundle_bytes) {
  return json{{"name", m.name},         {"version", m.version},  {"precision", to_string(m.precision)},
              {"checksum", m.checksum}, {"bundle", path},        {"bundle_bytes", bundle_bytes}};
}

std::string history_text(const DeploymentRecord& d) {
  std::string out = d.deployment_id + "  " + d.device_id + "  " + d.artifact.str() + "  " +
                    std::string(to_string(d.state)) + "\n";
  for (const HistoryEntry& h : d.state_history) {
    out += "    " + format_utc(h.timestamp) + "  " + std::string(to_string(h.state));
    if (!h.detail.empty()) out += "  (" + h.detail + ")";
    out += "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge model operations: toy training, int8 quantization, model bundles, "
               "a registry service and edge agents."};
  app.require_subcommand(1);
  Globals g;
  g.registry_url = env_or("EMLOPS_REGISTRY_URL", g.registry_url);
  app.add_option("--registry-url", g.registry_url, "Registry base URL (env EMLOPS_REGISTRY_URL)");
  app.add_option("--token", g.token, "Bearer token for the registry API");
  app.add_flag("--json", g.json_output, "Machine-readable output");
  app.add_option("--seed", g.seed, "Seed for toy data and training");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off");

  std::function<int()> action;
  auto client = [&g] { return HttpRegistryClient(g.registry_url, g.token); };

  // train-toy
  toy::ToyDatasetSpec spec;
  toy::TrainOptions train_opts;
  std::size_t image_size = 16;
  std::string name = "toy-vqi";
  std::string version = "1.0.0";
  std::optional<std::string> created_at;
  double confidence_floor = 0.5;
  std::string out_path;
  std::optional<std::string> condition_map_text;
  auto* train_cmd = app.add_subcommand("train-toy", "Train the toy classifier and pack it as an fp32 bundle");
  train_cmd->add_option("--classes", spec.classes, "Number of classes")->capture_default_str();
  train_cmd->add_option("--samples-per-class", spec.samples_per_class, "Samples per class and split")
      ->capture_default_str();
  train_cmd->add_option("--size", image_size, "Image height and width")->capture_default_str();
  train_cmd->add_option("--noise", spec.noise, "Pixel noise as a fraction of 255")->capture_default_str();
  train_cmd->add_option("--epochs", train_opts.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train_opts.learning_rate)->capture_default_str();
  train_cmd->add_option("--hidden", train_opts.hidden, "Hidden units")->capture_default_str();
  train_cmd->add_option("--name", name)->capture_default_str();
  train_cmd->add_option("--version", version)->capture_default_str();
  train_cmd->add_option("--created-at", created_at, "Manifest timestamp (default SOURCE_DATE_EPOCH or now)");
  train_cmd->add_option("--confidence-floor", confidence_floor)->capture_default_str();
  train_cmd->add_option("--condition-map", condition_map_text, "label=CONDITION,...");
  train_cmd->add_option("-o,--out", out_path, "Bundle to write")->required();
  train_cmd->callback([&] {
    action = [&] {
      spec.seed = g.seed;
      spec.height = spec.width = image_size;
      const toy::ToyDataset data = toy::make_dataset(spec);
      const toy::TrainResult r = toy::train(data, train_opts, g.seed);
      PackOptions po{name, version,
                     condition_map_text ? toolkit::parse_condition_map(*condition_map_text)
                                        : toy::default_condition_map(data.labels),
                     confidence_floor, toolkit::resolve_created_at(created_at)};
      const Bytes bytes = pack(r.model, po).to_bytes();
      write_bytes(out_path, bytes);
      const ArtifactManifest m = read_verified_manifest(bytes);
      json j = summary_json(m, out_path, bytes.size());
      j["train_accuracy"] = r.train_accuracy;
      j["test_accuracy"] = r.test_accuracy;
      j["final_loss"] = r.final_loss;
      j["parameters"] = r.model.parameter_count();
      char buf[512];
      std::snprintf(buf, sizeof buf,
                    "trained %zu parameters: loss %.4f, train accuracy %.4f, test accuracy %.4f\nwrote %s (%zu bytes, "
                    "%s@%s)\n",
                    r.model.parameter_count(), r.final_loss, r.train_accuracy, r.test_accuracy, out_path.c_str(),
                    bytes.size(), m.name.c_str(), m.version.c_str());
      print(g, j, buf);
      return 0;
    };
  });

  // quantize
  std::string in_path;
  std::string mode_text;
  std::optional<std::string> calibration_dir;
  bool calibration_toy = false;
  std::optional<std::string> quant_version;
  auto* quant_cmd = app.add_subcommand("quantize", "Quantize an fp32 bundle to int8");
  quant_cmd->add_option("-i,--in", in_path, "fp32 bundle")->required();
  quant_cmd->add_option("--mode", mode_text, "static or dynamic")->required()->check(CLI::IsMember({"static", "dynamic"}));
  quant_cmd->add_option("--calibration", calibration_dir, "Directory of .ppm/.pgm calibration images");
  quant_cmd->add_flag("--calibration-toy", calibration_toy,
                      "Calibrate on the first 32 toy training images (uses --seed)");
  quant_cmd->add_option("--version", quant_version, "Version of the result (default: patch bump)");
  quant_cmd->add_option("--created-at", created_at);
  quant_cmd->add_option("-o,--out", out_path, "Bundle to write")->required();
  quant_cmd->callback([&] {
    action = [&] {
      const Bytes source = read_bundle(in_path);
      const ArtifactManifest sm = read_verified_manifest(source);
      const QuantMode mode = mode_text == "static" ? QuantMode::static_activations : QuantMode::dynamic_activations;
      std::vector<Tensor> calibration;
      if (mode == QuantMode::static_activations) {
        if (calibration_dir) {
          calibration = toolkit::load_image_dir(*calibration_dir, sm.input_shape);
        } else if (calibration_toy) {
          toy::ToyDatasetSpec cs;
          cs.seed = g.seed;
          cs.classes = sm.labels.size();
          cs.height = sm.input_shape.size() == 3 ? sm.input_shape[1] : 16;
          cs.width = sm.input_shape.size() == 3 ? sm.input_shape[2] : 16;
          calibration = toy::calibration_inputs(toy::make_dataset(cs), sm.input_shape, 32);
        } else {
          throw UsageError("static quantization needs --calibration DIR or --calibration-toy");
        }
      }
      const ArtifactBundle b =
          toolkit::quantize_bundle(source, mode, calibration, quant_version, toolkit::resolve_created_at(created_at));
      const Bytes bytes = b.to_bytes();
      write_bytes(out_path, bytes);
      json j = summary_json(b.manifest, out_path, bytes.size());
      j["size_ratio"] = size_report(source.size(), bytes.size());
      char buf[512];
      std::snprintf(buf, sizeof buf, "wrote %s (%zu bytes, %s@%s, %s); size ratio %.4f\n", out_path.c_str(),
                    bytes.size(), b.manifest.name.c_str(), b.manifest.version.c_str(),
                    std::string(to_string(b.manifest.precision)).c_str(), j["size_ratio"].get<double>());
      print(g, j, buf);
      return 0;
    };
  });

  // pack
  std::optional<std::string> pack_name, pack_version;
  std::optional<double> pack_floor;
  auto* pack_cmd = app.add_subcommand("pack", "Re-pack a bundle under a new name, version or condition map");
  pack_cmd->add_option("-i,--in", in_path, "Source bundle")->required();
  pack_cmd->add_option("--name", pack_name);
  pack_cmd->add_option("--version", pack_version);
  pack_cmd->add_option("--condition-map", condition_map_text, "label=CONDITION,...");
  pack_cmd->add_option("--confidence-floor", pack_floor);
  pack_cmd->add_option("--created-at", created_at);
  pack_cmd->add_option("-o,--out", out_path, "Bundle to write")->required();
  pack_cmd->callback([&] {
    action = [&] {
      const UnpackedBundle src = unpack(read_bundle(in_path));
      PackOptions po{pack_name.value_or(src.manifest.name), pack_version.value_or(src.manifest.version),
                     condition_map_text ? toolkit::parse_condition_map(*condition_map_text) : src.manifest.condition_map,
                     pack_floor.value_or(src.manifest.confidence_floor), toolkit::resolve_created_at(created_at)};
      const ArtifactBundle b = pack(src.model, po);
      const Bytes bytes = b.to_bytes();
      write_bytes(out_path, bytes);
      print(g, summary_json(b.manifest, out_path, bytes.size()),
            "wrote " + out_path + " (" + b.manifest.name + "@" + b.manifest.version + ")\n");
      return 0;
    };
  });

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Verify a bundle and print its manifest");
  inspect_cmd->add_option("bundle", in_path)->required();
  inspect_cmd->callback([&] {
    action = [&] {
      const Bytes bytes = read_bundle(in_path);
      const UnpackedBundle b = unpack(bytes);
      json j = b.manifest;
      std::cout << j.dump(2) << '\n';
      return 0;
    };
  });

  // make-samples
  std::size_t sample_count = 10;
  std::string sample_dir;
  auto* samples_cmd = app.add_subcommand("make-samples", "Write toy test images as PPM files");
  samples_cmd->add_option("-o,--out", sample_dir, "Output directory")->required();
  samples_cmd->add_option("--count", sample_count)->capture_default_str();
  samples_cmd->add_option("--classes", spec.classes)->capture_default_str();
  samples_cmd->add_option("--size", image_size)->capture_default_str();
  samples_cmd->add_option("--noise", spec.noise)->capture_default_str();
  samples_cmd->callback([&] {
    action = [&] {
      spec.seed = g.seed;
      spec.height = spec.width = image_size;
      const auto paths = toolkit::write_toy_images(sample_dir, spec, sample_count);
      json j = json::array();
      std::string text;
      for (const auto& p : paths) {
        j.push_back(p.string());
        text += p.string() + "\n";
      }
      print(g, j, text);
      return 0;
    };
  });

  // upload
  auto* upload_cmd = app.add_subcommand("upload", "Upload a bundle to the registry");
  upload_cmd->add_option("bundle", in_path)->required();
  upload_cmd->callback([&] {
    action = [&] {
      const ArtifactManifest m = client().upload_artifact(read_bundle(in_path));
      json j = m;
      print(g, j, "uploaded " + m.name + "@" + m.version + " (" + m.checksum.substr(0, 12) + ")\n");
      return 0;
    };
  });

  // list
  auto* list_cmd = app.add_subcommand("list", "List artifacts in the registry");
  list_cmd->callback([&] {
    action = [&] {
      const auto artifacts = client().list_artifacts();
      char header[256];
      std::snprintf(header, sizeof header, "%-20s %-10s %-13s %10s  %-12s  %s\n", "NAME", "VERSION", "PRECISION",
                    "BYTES", "CHECKSUM", "CREATED");
      std::string text = header;
      for (const auto& m : artifacts) text += manifest_line(m);
      print(g, json(artifacts), text);
      return 0;
    };
  });

  // deploy
  std::string device_id;
  std::string artifact_name = "toy-vqi";
  std::string artifact_version;
  double wait_seconds = 0.0;
  auto* deploy_cmd = app.add_subcommand("deploy", "Deploy an artifact version to a device");
  deploy_cmd->add_option("--device", device_id)->required();
  deploy_cmd->add_option("--artifact", artifact_name)->capture_default_str();
  deploy_cmd->add_option("--version", artifact_version)->required();
  deploy_cmd->add_option("--wait", wait_seconds, "Seconds to wait for a terminal state");
  auto wait_terminal = [&](HttpRegistryClient& c, DeploymentRecord d) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(wait_seconds);
    while (is_in_flight(d.state) && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      d = c.get_deployment(d.deployment_id);
    }
    return d;
  };
  deploy_cmd->callback([&] {
    action = [&] {
      HttpRegistryClient c = client();
      DeploymentRecord d = c.create_deployment(device_id, {artifact_name, artifact_version});
      if (wait_seconds > 0) d = wait_terminal(c, d);
      print(g, json(d), history_text(d));
      return d.state == DeploymentState::failed ? 1 : 0;
    };
  });

  // rollback
  auto* rollback_cmd = app.add_subcommand("rollback", "Roll a device back to its previous artifact");
  rollback_cmd->add_option("--device", device_id)->required();
  rollback_cmd->add_option("--wait", wait_seconds, "Seconds to wait for a terminal state");
  rollback_cmd->callback([&] {
    action = [&] {
      HttpRegistryClient c = client();
      DeploymentRecord d = c.rollback(device_id);
      if (wait_seconds > 0) d = wait_terminal(c, d);
      print(g, json(d), history_text(d));
      return d.state == DeploymentState::failed ? 1 : 0;
    };
  });

  // fleet-status
  bool show_history = false;
  auto* status_cmd = app.add_subcommand("fleet-status", "Show devices, their versions and deployments");
  status_cmd->add_flag("--history", show_history, "Include every deployment's state history");
  status_cmd->callback([&] {
    action = [&] {
      HttpRegistryClient c = client();
      const auto devices = c.list_devices();
      json j{{"devices", devices}};
      char line[512];
      std::snprintf(line, sizeof line, "%-16s %-8s %-20s %-20s %-12s %s\n", "DEVICE", "STATUS", "ACTIVE", "PREVIOUS",
                    "DEPLOYMENT", "STATE");
      std::string text = line;
      for (const DeviceView& v : devices) {
        std::snprintf(line, sizeof line, "%-16s %-8s %-20s %-20s %-12s %s\n", v.record.device_id.c_str(),
                      std::string(to_string(v.status)).c_str(), optional_ref(v.record.active_artifact).c_str(),
                      optional_ref(v.record.previous_artifact).c_str(), v.latest_deployment_id.value_or("-").c_str(),
                      v.latest_deployment_state ? std::string(to_string(*v.latest_deployment_state)).c_str() : "-");
        text += line;
      }
      if (show_history) {
        const auto deployments = c.list_deployments();
        j["deployments"] = deployments;
        text += "\n";
        for (const auto& d : deployments) text += history_text(d);
      }
      print(g, j, text);
      return 0;
    };
  });

  // benchmark
  std::string fp32_path, static_path, dynamic_path;
  std::optional<std::string> images_dir, csv_path;
  std::size_t runs = 50;
  auto* bench_cmd = app.add_subcommand("benchmark", "Time fp32, int8-static and int8-dynamic bundles");
  bench_cmd->add_option("--fp32", fp32_path)->required();
  bench_cmd->add_option("--static", static_path)->required();
  bench_cmd->add_option("--dynamic", dynamic_path)->required();
  bench_cmd->add_option("--images", images_dir, "Directory of .ppm/.pgm images (default: toy test split)");
  bench_cmd->add_option("--runs", runs)->capture_default_str();
  bench_cmd->add_option("--csv", csv_path, "Write per-inference rows here");
  bench_cmd->callback([&] {
    action = [&] {
      const std::vector<Bytes> bundles{read_bundle(fp32_path), read_bundle(static_path), read_bundle(dynamic_path)};
      std::vector<Tensor> images;
      if (images_dir) {
        images = toolkit::decode_image_dir(*images_dir);
      } else {
        const ArtifactManifest m = read_verified_manifest(bundles[0]);
        toy::ToyDatasetSpec ts;
        ts.seed = g.seed;
        ts.classes = m.labels.size();
        for (const auto& s : toy::make_dataset(ts).test) images.push_back(s.image);
      }
      const BenchmarkReport report = run_benchmark(bundles, images, runs);
      if (csv_path) {
        std::ofstream out(*csv_path);
        write_csv(report, out);
        if (!out) throw StorageError("cannot write '" + *csv_path + "'");
      }
      json j = json::array();
      for (const PrecisionReport& r : report.precisions) {
        j.push_back({{"precision", to_string(r.precision)},
                     {"runs", r.runs()},
                     {"mean_latency_ms", r.mean_latency_ms()},
                     {"min_latency_ms", r.min_latency_ms()},
                     {"max_latency_ms", r.max_latency_ms()},
                     {"op_counter_totals", r.totals()},
                     {"model_bytes", r.model_bytes},
                     {"agreement", r.agreement}});
      }
      std::ostringstream table;
      print_table(report, table);
      print(g, j, table.str());
      return 0;
    };
  });

  // infer-local
  std::string image_path;
  std::string asset_id;
  auto* infer_cmd = app.add_subcommand("infer-local", "Run the inspection pipeline on one image, offline");
  infer_cmd->add_option("--bundle", in_path)->required();
  infer_cmd->add_option("image", image_path)->required();
  infer_cmd->add_option("--asset-id", asset_id);
  infer_cmd->callback([&] {
    action = [&] {
      const vqi::LoadedArtifact artifact = vqi::LoadedArtifact::from_bundle(read_bundle(in_path));
      auto image = persist::read_file(image_path);
      if (!image) throw UsageError("cannot read '" + image_path + "'");
      const vqi::InferenceResult r = vqi::run_pipeline(artifact, *image);
      json j = vqi::to_json(r);
      j["asset_id"] = asset_id.empty() ? vqi::default_asset_id(*image) : asset_id;
      std::cout << j.dump(g.json_output ? 2 : -1) << '\n';
      return 0;
    };
  });

  // serve
  std::string listen = env_or("EMLOPS_LISTEN", "127.0.0.1:8080");
  std::string data_dir = env_or("EMLOPS_DATA_DIR", "./registry-data");
  double stale_after = 30, offline_after = 120;
  auto* serve_cmd = app.add_subcommand("serve", "Run the registry service");
  serve_cmd->add_option("--listen", listen, "host:port (env EMLOPS_LISTEN)")->capture_default_str();
  serve_cmd->add_option("--data-dir", data_dir, "Store directory (env EMLOPS_DATA_DIR)")->capture_default_str();
  serve_cmd->add_option("--stale-after", stale_after, "Seconds without heartbeat before 'stale'")
      ->capture_default_str();
  serve_cmd->add_option("--offline-after", offline_after, "Seconds without heartbeat before 'offline'")
      ->capture_default_str();
  serve_cmd->callback([&] {
    action = [&] {
      RegistryConfig rc;
      rc.data_dir = data_dir;
      rc.stale_after = std::chrono::milliseconds(static_cast<long long>(stale_after * 1000));
      rc.offline_after = std::chrono::milliseconds(static_cast<long long>(offline_after * 1000));
      Registry registry(rc);
      RegistryServer server(registry, g.token);
      const auto [host, port] = split_host_port(listen);
      server.start(host, port);
      std::cout << "registry serving " << server.url() << " from " << data_dir << std::endl;
      wait_for_signal();
      server.stop();
      return 0;
    };
  });

  // agent
  std::string install_root = "./agent-data";
  double poll_interval = 30;
  std::optional<std::string> agent_listen;
  bool forward_samples = false;
  std::size_t fleet_size = 0;
  std::string device_prefix = "edge-";
  auto* agent_cmd = app.add_subcommand("agent", "Run an edge agent (or a simulated fleet)");
  agent_cmd->add_option("--device-id", device_id);
  agent_cmd->add_option("--install-root", install_root)->capture_default_str();
  agent_cmd->add_option("--poll-interval", poll_interval, "Seconds between polls")->capture_default_str();
  agent_cmd->add_option("--listen", agent_listen, "host:port of the local inference endpoint");
  agent_cmd->add_flag("--forward-samples", forward_samples, "Send undecodable or low-confidence images to the registry");
  agent_cmd->add_option("--fleet", fleet_size, "Run this many simulated agents instead of one");
  agent_cmd->add_option("--device-prefix", device_prefix, "Device id prefix in fleet mode")->capture_default_str();
  agent_cmd->callback([&] {
    action = [&] {
      const auto interval = std::chrono::milliseconds(static_cast<long long>(poll_interval * 1000));
      if (fleet_size > 0) {
        FleetConfig fc;
        fc.registry_url = g.registry_url;
        fc.size = fleet_size;
        fc.device_prefix = device_prefix;
        fc.root = install_root;
        fc.poll_interval = interval;
        fc.forward_samples = forward_samples;
        Fleet fleet(fc);
        fleet.start();
        for (std::size_t i = 0; i < fleet.size(); ++i) {
          std::cout << fleet.agent(i).config().device_id << " " << fleet.endpoint(i) << std::endl;
        }
        wait_for_signal();
        fleet.stop();
        return 0;
      }
      if (device_id.empty()) throw UsageError("--device-id is required unless --fleet is given");
      HttpRegistryClient c = client();
      AgentConfig ac;
      ac.device_id = device_id;
      ac.install_root = install_root;
      ac.poll_interval = interval;
      ac.forward_samples = forward_samples;
      EdgeAgent agent(ac, c);
      std::optional<AgentServer> server;
      if (agent_listen) {
        server.emplace(agent);
        const auto [host, port] = split_host_port(*agent_listen);
        server->start(host, port);
      }
      std::jthread loop([&agent](std::stop_token stop) { agent.run(stop); });
      wait_for_signal();
      loop.request_stop();
      loop.join();
      if (server) server->stop();
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    spdlog::set_default_logger(spdlog::stderr_color_mt("emlops"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    if (g.json_output) {
      std::cerr << json{{"error", e.kind()}, {"detail", e.what()}}.dump() << '\n';
    } else {
      std::cerr << "error (" << e.kind() << "): " << e.what() << '\n';
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
