#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emlops/model_package.hpp"
#include "emlops/quantization.hpp"
#include "emlops/timeutil.hpp"
#include "emlops/toy.hpp"

/// Building blocks of the command-line tool.
namespace emlops::toolkit {

/// `flag` if given, else SOURCE_DATE_EPOCH (seconds) if set, else now.
std::string resolve_created_at(const std::optional<std::string>& flag, const Clock& clock = system_clock());

/// Quantizes the fp32 model in `bundle`. Static mode needs at least one
/// preprocessed calibration input (UsageError otherwise). The version
/// defaults to the source version with its patch bumped; name, labels,
/// condition map and confidence floor carry over.
ArtifactBundle quantize_bundle(std::span<const std::uint8_t> bundle, QuantMode mode,
                               std::span<const Tensor> calibration, const std::optional<std::string>& version,
                               const std::string& created_at);

/// Every .ppm/.pgm file in `dir`, sorted by name, decoded and preprocessed
/// to `input_shape`. Throws UsageError when there are none.
std::vector<Tensor> load_image_dir(const std::filesystem::path& dir, const Shape& input_shape);

/// Raw [C,H,W] images of every .ppm/.pgm file in `dir`, sorted by name.
std::vector<Tensor> decode_image_dir(const std::filesystem::path& dir);

/// Writes the first `count` test images of the toy dataset as P6 files
/// named sample-NNN-<label>.ppm. Returns the paths written.
std::vector<std::filesystem::path> write_toy_images(const std::filesystem::path& dir,
                                                    const toy::ToyDatasetSpec& spec, std::size_t count);

/// [1,H,W] grey image replicated into a [3,H,W] colour image.
Tensor grey_to_rgb(const Tensor& grey);

/// "label=CONDITION,label=CONDITION". Throws UsageError.
std::map<std::string, Condition> parse_condition_map(const std::string& text);

}  // namespace emlops::toolkit
