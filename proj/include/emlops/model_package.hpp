#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "emlops/model_graph.hpp"
#include "emlops/quantization.hpp"

namespace emlops {

using Bytes = std::vector<std::uint8_t>;

enum class Precision { fp32, int8_static, int8_dynamic };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);

/// major.minor.patch, compared numerically.
struct SemVer {
  std::uint64_t major = 0;
  std::uint64_t minor = 0;
  std::uint64_t patch = 0;

  static SemVer parse(std::string_view text);
  std::string str() const;
  SemVer next_patch() const { return {major, minor, patch + 1}; }

  auto operator<=>(const SemVer&) const = default;
};

std::strong_ordering compare_versions(std::string_view a, std::string_view b);

enum class Condition { ok, degraded, critical, unknown };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);

struct ArtifactManifest {
  std::string name;
  std::string version;
  Precision precision = Precision::fp32;
  Shape input_shape;
  std::vector<std::string> labels;
  std::map<std::string, Condition> condition_map;
  double confidence_floor = 0.5;
  std::string checksum;
  std::string created_at;
  std::uint64_t byte_size = 0;

  /// Throws ManifestError / VersionError when an invariant does not hold.
  void validate() const;

  /// Canonical form: sorted keys, no insignificant whitespace.
  std::string to_canonical_json() const;
  static ArtifactManifest from_json(const nlohmann::json& j);

  bool operator==(const ArtifactManifest&) const = default;
};

void to_json(nlohmann::json& j, const ArtifactManifest& m);

using ModelVariant = std::variant<ModelGraph, QuantizedModel>;

Precision precision_of(const ModelVariant& model);
const std::vector<std::string>& labels_of(const ModelVariant& model);
const Shape& input_shape_of(const ModelVariant& model);

/// Little-endian "EMLM" weights blob. Same model, same bytes.
Bytes serialize_model(const ModelVariant& model);

/// Throws ParseError carrying the byte offset of the first malformed field.
ModelVariant deserialize_model(std::span<const std::uint8_t> blob);

std::string sha256_hex(std::span<const std::uint8_t> data);

struct PackOptions {
  std::string name;
  std::string version;
  std::map<std::string, Condition> condition_map;
  double confidence_floor = 0.5;
  std::string created_at;
};

struct ArtifactBundle {
  ArtifactManifest manifest;
  Bytes blob;

  /// `.emlm` layout: u32 LE manifest length, manifest JSON, weights blob.
  Bytes to_bytes() const;
};

ArtifactBundle pack(const ModelVariant& model, const PackOptions& options);

struct UnpackedBundle {
  ArtifactManifest manifest;
  ModelVariant model;
};

/// Verifies the checksum before touching the blob. Throws IntegrityError on
/// checksum or size mismatch and ParseError on malformed framing or blob.
UnpackedBundle unpack(std::span<const std::uint8_t> bundle);

/// Framing and checksum only; the blob is not deserialized.
ArtifactManifest read_verified_manifest(std::span<const std::uint8_t> bundle);

}  // namespace emlops
