#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "emlops/model_graph.hpp"
#include "emlops/tensor.hpp"

namespace emlops {

enum class QuantScheme : std::uint8_t { symmetric, asymmetric };

/// Affine int8 mapping: real = scale * (q - zero_point).
struct QuantizationParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  QuantScheme scheme = QuantScheme::symmetric;

  bool operator==(const QuantizationParams&) const = default;
};

/// Clamp range of the int8 grid: symmetric [-127, 127], asymmetric [-128, 127].
std::pair<std::int32_t, std::int32_t> clamp_range(QuantScheme scheme);

/// Throws InvalidDataError when scale is not positive/finite, the zero point is
/// outside int8, or a symmetric scheme carries a nonzero zero point.
void validate(const QuantizationParams& params);

/// Round half to even, independent of the current floating-point environment.
double round_half_even(double v);

QuantizationParams compute_params_symmetric(std::span<const float> values);
QuantizationParams compute_params_asymmetric(std::span<const float> values);
inline QuantizationParams compute_params_symmetric(const Tensor& t) { return compute_params_symmetric(t.data()); }
inline QuantizationParams compute_params_asymmetric(const Tensor& t) { return compute_params_asymmetric(t.data()); }

/// Asymmetric parameters for an observed [lo, hi] range, widened to include 0.
QuantizationParams asymmetric_params_for_range(float lo, float hi);

class QTensor {
 public:
  QTensor() = default;
  QTensor(Shape shape, std::vector<std::int8_t> qdata, QuantizationParams params);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return qdata_.size(); }
  std::span<const std::int8_t> qdata() const noexcept { return qdata_; }
  const QuantizationParams& params() const noexcept { return params_; }

  bool operator==(const QTensor&) const = default;

 private:
  Shape shape_;
  std::vector<std::int8_t> qdata_;
  QuantizationParams params_;
};

std::int8_t quantize_value(float v, const QuantizationParams& p);
QTensor quantize(const Tensor& t, const QuantizationParams& p);
Tensor dequantize(const QTensor& q);

/// Per activation site running extrema. Site 0 is the model input, site i+1
/// the output of layer i.
struct SiteRange {
  float min = 0.0f;
  float max = 0.0f;
  bool operator==(const SiteRange&) const = default;
};

struct CalibrationStats {
  std::vector<SiteRange> sites;
  std::size_t sample_count = 0;
  bool operator==(const CalibrationStats&) const = default;
};

CalibrationStats calibrate(const ModelGraph& model, std::span<const Tensor> samples);

enum class QuantMode : std::uint8_t { static_activations, dynamic_activations };

/// Static models keep int32 biases (scale = weight scale * input scale);
/// dynamic models keep fp32 biases and requantize them per call, since the
/// input scale is only known at run time.
using BiasStorage = std::variant<std::vector<std::int32_t>, std::vector<float>>;

struct QDense {
  QTensor weights;
  BiasStorage bias;
  bool operator==(const QDense&) const = default;
};

struct QConv2D {
  QTensor kernels;
  BiasStorage bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const QConv2D&) const = default;
};

using QLayer = std::variant<QDense, QConv2D, ReLU, MaxPool2D, Flatten, Softmax>;

class QuantizedModel {
 public:
  /// `activation_params` must hold one entry per activation site in static
  /// mode and be empty in dynamic mode.
  QuantizedModel(Shape input_shape, std::vector<QLayer> layers, std::vector<std::string> labels, QuantMode mode,
                 std::vector<QuantizationParams> activation_params);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<QLayer>& layers() const noexcept { return layers_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  QuantMode mode() const noexcept { return mode_; }
  const std::vector<QuantizationParams>& activation_params() const noexcept { return activation_params_; }

  std::vector<Shape> activation_shapes() const;

  bool operator==(const QuantizedModel&) const = default;

 private:
  Shape input_shape_;
  std::vector<QLayer> layers_;
  std::vector<std::string> labels_;
  QuantMode mode_;
  std::vector<QuantizationParams> activation_params_;
};

QuantizedModel quantize_model_static(const ModelGraph& model, const CalibrationStats& stats);
QuantizedModel quantize_model_dynamic(const ModelGraph& model);

/// Integer core of a quantized Dense layer: acc[i] = sum_j w[i,j] * (x[j] - x_zero_point).
std::vector<std::int32_t> int8_dense_accumulate(const QTensor& weights, std::span<const std::int8_t> x,
                                                std::int32_t x_zero_point, OpCounters& counters);

/// Integer core of a quantized Conv2D layer over x of shape [inC, H, W].
/// Zero padding contributes (x_zero_point - x_zero_point) = 0.
std::vector<std::int32_t> int8_conv_accumulate(const QTensor& kernels, std::size_t stride, std::size_t padding,
                                               const Shape& x_shape, std::span<const std::int8_t> x,
                                               std::int32_t x_zero_point, OpCounters& counters);

ForwardResult forward_quantized(const QuantizedModel& model, const Tensor& x);

/// fp32 bytes / quantized bytes. Throws InvalidDataError on a zero size.
double size_report(std::size_t fp32_bytes, std::size_t quantized_bytes);

}  // namespace emlops
