#include "emlops/vqi.hpp"

#include <chrono>
#include <string>

#include "emlops/errors.hpp"
#include "emlops/overloaded.hpp"

namespace emlops::vqi {

namespace {

// Upper bound on decoded samples (C*H*W); larger headers are rejected.
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 28;

class HeaderScanner {
 public:
  explicit HeaderScanner(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  /// Offset of the most recently scanned number.
  std::size_t last_start() const { return last_start_; }

  static bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = last_start_ = pos_;
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > kMaxSamples) throw InputError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw InputError(std::string("expected ") + what + (pos_ >= bytes_.size() ? ", found end of data" : ""), pos_);
    }
    return v;
  }

  void single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
      throw InputError("expected a single whitespace byte before pixel data", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
  std::size_t last_start_ = 2;
};

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw InputError("not a binary PPM/PGM image (expected magic P6 or P5)", 0);
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderScanner scan(bytes);
  const std::uint64_t width = scan.number("width");
  const std::size_t width_at = scan.last_start();
  const std::uint64_t height = scan.number("height");
  if (width == 0) throw InputError("image width must be positive", width_at);
  if (height == 0) throw InputError("image height must be positive", scan.last_start());
  if (width * height * channels > kMaxSamples) throw InputError("image dimensions overflow the size limit", width_at);
  const std::uint64_t maxval = scan.number("maxval");
  if (maxval != 255) throw InputError("maxval must be 255, got " + std::to_string(maxval), scan.last_start());
  scan.single_space();

  const std::size_t data_at = scan.pos();
  const std::size_t plane = static_cast<std::size_t>(width * height);
  const std::size_t needed = plane * channels;
  if (bytes.size() - data_at < needed) {
    throw InputError("truncated pixel data: need " + std::to_string(needed) + " bytes, have " +
                     std::to_string(bytes.size() - data_at),
                     bytes.size());
  }
  Tensor out({channels, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  const std::uint8_t* px = bytes.data() + data_at;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) out[c * plane + i] = static_cast<float>(px[i * channels + c]);
  }
  return out;
}

Bytes encode_ppm(const Tensor& image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw DimensionError("encode_ppm expects [1,H,W] or [3,H,W], got " + to_string(s));
  }
  const std::size_t channels = s[0];
  const std::string header =
      std::string(channels == 3 ? "P6" : "P5") + "\n" + std::to_string(s[2]) + " " + std::to_string(s[1]) + "\n255\n";
  Bytes out(header.begin(), header.end());
  const std::size_t plane = s[1] * s[2];
  out.reserve(out.size() + plane * channels);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = image[c * plane + i];
      if (!(v >= 0.0f && v <= 255.0f) || v != static_cast<float>(static_cast<int>(v))) {
        throw InvalidDataError("pixel value " + std::to_string(v) + " is not an integer in [0,255]");
      }
      out.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw DimensionError("resize expects [C,H,W], got " + to_string(s));
  if (height == 0 || width == 0) throw DimensionError("resize target must be non-empty");
  const std::size_t channels = s[0], src_h = s[1], src_w = s[2];
  Tensor out({channels, height, width});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < height; ++i) {
      const std::size_t si = i * src_h / height;
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t sj = j * src_w / width;
        out[(c * height + i) * width + j] = image[(c * src_h + si) * src_w + sj];
      }
    }
  }
  return out;
}

Tensor preprocess(const Tensor& image, const Shape& target) {
  if (target.size() != 3 || element_count(target) == 0) {
    throw DimensionError("preprocess target must be a non-empty [C,H,W], got " + to_string(target));
  }
  const Tensor resized = resize_nearest(image, target[1], target[2]);
  const std::size_t src_c = resized.shape()[0];
  const std::size_t dst_c = target[0];
  const std::size_t plane = target[1] * target[2];
  Tensor out(target);
  if (src_c == dst_c) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = resized[i] / 255.0f;
  } else if (dst_c == 1) {
    for (std::size_t i = 0; i < plane; ++i) {
      float sum = 0.0f;
      for (std::size_t c = 0; c < src_c; ++c) sum += resized[c * plane + i];
      out[i] = sum / static_cast<float>(src_c) / 255.0f;
    }
  } else if (src_c == 1) {
    for (std::size_t c = 0; c < dst_c; ++c) {
      for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = resized[i] / 255.0f;
    }
  } else {
    throw DimensionError("cannot convert " + std::to_string(src_c) + " channels to " + std::to_string(dst_c));
  }
  return out;
}

ClassPrediction postprocess(const Tensor& probabilities, const std::vector<std::string>& labels) {
  if (probabilities.size() != labels.size()) {
    throw DimensionError("probability vector of " + std::to_string(probabilities.size()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  ClassPrediction p;
  p.class_index = argmax(probabilities);
  p.label = labels[p.class_index];
  p.confidence = probabilities[p.class_index];
  p.probabilities = probabilities;
  return p;
}

Condition map_condition(const ClassPrediction& prediction, const std::map<std::string, Condition>& condition_map,
                        double confidence_floor) {
  const auto it = condition_map.find(prediction.label);
  if (it == condition_map.end()) throw ConfigError("label '" + prediction.label + "' has no condition mapping");
  return prediction.confidence >= confidence_floor ? it->second : Condition::unknown;
}

LoadedArtifact LoadedArtifact::from_bundle(std::span<const std::uint8_t> bundle) {
  UnpackedBundle u = unpack(bundle);
  return {std::move(u.manifest), std::move(u.model)};
}

ForwardResult forward(const ModelVariant& model, const Tensor& input) {
  return std::visit(Overloaded{
                        [&](const ModelGraph& g) {
                          ForwardResult r = forward_fp32(g, input);
                          if (g.layers().empty() || !std::holds_alternative<Softmax>(g.layers().back())) {
                            r.output = softmax(flatten(r.output));
                          }
                          return r;
                        },
                        [&](const QuantizedModel& q) {
                          ForwardResult r = forward_quantized(q, input);
                          if (q.layers().empty() || !std::holds_alternative<Softmax>(q.layers().back())) {
                            r.output = softmax(flatten(r.output));
                          }
                          return r;
                        },
                    },
                    model);
}

InferenceResult run_pipeline(const LoadedArtifact& artifact, std::span<const std::uint8_t> image_bytes) {
  const Tensor image = decode_ppm(image_bytes);
  const Tensor input = preprocess(image, artifact.manifest.input_shape);
  const auto start = std::chrono::steady_clock::now();
  ForwardResult fr = forward(artifact.model, input);
  const auto stop = std::chrono::steady_clock::now();

  InferenceResult r;
  r.prediction = postprocess(fr.output, artifact.manifest.labels);
  r.condition = map_condition(r.prediction, artifact.manifest.condition_map, artifact.manifest.confidence_floor);
  r.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  r.counters = fr.counters;
  r.model_version = artifact.manifest.version;
  return r;
}

std::string default_asset_id(std::span<const std::uint8_t> image_bytes) {
  return "asset-" + sha256_hex(image_bytes).substr(0, 12);
}

nlohmann::json to_json(const InferenceResult& result) {
  return {
      {"label", result.prediction.label},
      {"confidence", result.prediction.confidence},
      {"condition", to_string(result.condition)},
      {"model_version", result.model_version},
      {"latency_ms", result.latency_ms},
  };
}

}  // namespace emlops::vqi
