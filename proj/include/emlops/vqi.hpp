#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "emlops/model_package.hpp"
#include "emlops/tensor.hpp"
#include "emlops/timeutil.hpp"

/// Visual quality inspection: image decoding, pre/post-processing and the
/// mapping from class predictions to asset conditions.
namespace emlops::vqi {

/// Binary PPM (P6) or PGM (P5) with maxval 255 into a channel-major
/// [C, H, W] tensor of values in [0, 255]. Throws InputError with the byte
/// offset of the first problem.
Tensor decode_ppm(std::span<const std::uint8_t> bytes);

/// Inverse of decode_ppm for [3,H,W] (P6) or [1,H,W] (P5) tensors holding
/// integers in [0, 255].
Bytes encode_ppm(const Tensor& image);

/// Nearest neighbour: out[c,i,j] = in[c, floor(i*H/h), floor(j*W/w)].
Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width);

/// Resize to the target [C,H,W], average or replicate channels as needed,
/// and scale into [0, 1].
Tensor preprocess(const Tensor& image, const Shape& target);

struct ClassPrediction {
  std::string label;
  std::size_t class_index = 0;
  float confidence = 0.0f;
  Tensor probabilities;
};

ClassPrediction postprocess(const Tensor& probabilities, const std::vector<std::string>& labels);

Condition map_condition(const ClassPrediction& prediction, const std::map<std::string, Condition>& condition_map,
                        double confidence_floor);

struct AssetConditionUpdate {
  std::string asset_id;
  std::string asset_type;
  std::string label;
  Condition condition = Condition::unknown;
  double confidence = 0.0;
  std::string model_version;
  std::string device_id;
  TimePoint timestamp;
};

/// A verified bundle ready to serve. Immutable once built.
struct LoadedArtifact {
  ArtifactManifest manifest;
  ModelVariant model;

  static LoadedArtifact from_bundle(std::span<const std::uint8_t> bundle);
};

struct InferenceResult {
  ClassPrediction prediction;
  Condition condition = Condition::unknown;
  double latency_ms = 0.0;
  OpCounters counters;
  std::string model_version;
};

/// Forward pass on an already preprocessed tensor; output is a probability
/// vector (softmax applied if the graph does not end in one).
ForwardResult forward(const ModelVariant& model, const Tensor& input);

/// decode -> preprocess -> forward -> postprocess -> condition mapping.
/// Latency covers the forward pass only.
InferenceResult run_pipeline(const LoadedArtifact& artifact, std::span<const std::uint8_t> image_bytes);

/// Asset id used when a request names none: "asset-" plus the first 12
/// hex digits of the image's SHA-256.
std::string default_asset_id(std::span<const std::uint8_t> image_bytes);

/// {label, confidence, condition, model_version, latency_ms}
nlohmann::json to_json(const InferenceResult& result);

}  // namespace emlops::vqi
