#include "emlops/toolkit.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "emlops/errors.hpp"
#include "emlops/persistence.hpp"
#include "emlops/vqi.hpp"

namespace emlops::toolkit {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> image_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw UsageError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::string resolve_created_at(const std::optional<std::string>& flag, const Clock& clock) {
  if (flag) {
    try {
      return format_utc(parse_utc(*flag));
    } catch (const BadRequestError& e) {
      throw UsageError(e.what());
    }
  }
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    char* end = nullptr;
    const long long secs = std::strtoll(epoch, &end, 10);
    if (*end != '\0' || secs < 0) throw UsageError("SOURCE_DATE_EPOCH must be a non-negative integer");
    return format_utc(TimePoint(std::chrono::seconds(secs)));
  }
  return format_utc(clock());
}

ArtifactBundle quantize_bundle(std::span<const std::uint8_t> bundle, QuantMode mode,
                               std::span<const Tensor> calibration, const std::optional<std::string>& version,
                               const std::string& created_at) {
  const UnpackedBundle source = unpack(bundle);
  const auto* graph = std::get_if<ModelGraph>(&source.model);
  if (!graph) throw UsageError("quantize needs an fp32 bundle; got " + std::string(to_string(source.manifest.precision)));

  ModelVariant quantized = [&]() -> ModelVariant {
    if (mode == QuantMode::dynamic_activations) return quantize_model_dynamic(*graph);
    if (calibration.empty()) throw UsageError("static quantization needs calibration data");
    return quantize_model_static(*graph, calibrate(*graph, calibration));
  }();

  PackOptions options;
  options.name = source.manifest.name;
  options.version = version ? *version : SemVer::parse(source.manifest.version).next_patch().str();
  options.condition_map = source.manifest.condition_map;
  options.confidence_floor = source.manifest.confidence_floor;
  options.created_at = created_at;
  return pack(quantized, options);
}

std::vector<Tensor> decode_image_dir(const fs::path& dir) {
  std::vector<Tensor> out;
  for (const fs::path& p : image_files(dir)) {
    auto bytes = persist::read_file(p);
    if (!bytes) throw UsageError("cannot read '" + p.string() + "'");
    out.push_back(vqi::decode_ppm(*bytes));
  }
  return out;
}

std::vector<Tensor> load_image_dir(const fs::path& dir, const Shape& input_shape) {
  std::vector<Tensor> out;
  for (const Tensor& img : decode_image_dir(dir)) out.push_back(vqi::preprocess(img, input_shape));
  if (out.empty()) throw UsageError("no .ppm or .pgm images in '" + dir.string() + "'");
  return out;
}

Tensor grey_to_rgb(const Tensor& grey) {
  if (grey.rank() != 3 || grey.shape()[0] != 1) throw DimensionError("expected a [1,H,W] image, got " + to_string(grey.shape()));
  const std::size_t plane = grey.shape()[1] * grey.shape()[2];
  Tensor rgb({3, grey.shape()[1], grey.shape()[2]});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) rgb[c * plane + i] = grey[i];
  }
  return rgb;
}

std::vector<fs::path> write_toy_images(const fs::path& dir, const toy::ToyDatasetSpec& spec, std::size_t count) {
  const toy::ToyDataset data = toy::make_dataset(spec);
  if (count > data.test.size()) {
    throw UsageError("the toy test split holds only " + std::to_string(data.test.size()) + " images");
  }
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < count; ++i) {
    const toy::ToySample& s = data.test[i];
    char name[64];
    std::snprintf(name, sizeof name, "sample-%03zu-", i);
    const fs::path path = dir / (name + data.labels[s.label] + ".ppm");
    persist::atomic_write(path, vqi::encode_ppm(grey_to_rgb(s.image)));
    written.push_back(path);
  }
  return written;
}

std::map<std::string, Condition> parse_condition_map(const std::string& text) {
  std::map<std::string, Condition> map;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, comma - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("condition map entry '" + item + "' is not label=CONDITION");
    try {
      map[item.substr(0, eq)] = parse_condition(item.substr(eq + 1));
    } catch (const ManifestError& e) {
      throw UsageError(e.what());
    }
    start = comma + 1;
  }
  return map;
}

}  // namespace emlops::toolkit
