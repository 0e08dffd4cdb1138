#include "emlops/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emlops/errors.hpp"
#include "emlops/overloaded.hpp"

namespace emlops {

namespace {

constexpr std::int32_t kSymmetricLimit = 127;
constexpr float kAsymmetricLevels = 255.0f;

// Largest fan-in for which 127 * 255 * fan_in still fits an int32 accumulator.
constexpr std::size_t kMaxFanIn = static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()) / (127 * 255);

void require_finite(std::span<const float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InvalidDataError("non-finite value at index " + std::to_string(i));
    }
  }
}

std::int32_t quantize_bias(double value, double bias_scale) {
  const double q = round_half_even(value / bias_scale);
  constexpr double lo = std::numeric_limits<std::int32_t>::min();
  constexpr double hi = std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int32_t>(std::clamp(q, lo, hi));
}

std::vector<std::int8_t> quantize_values(std::span<const float> values, const QuantizationParams& p) {
  std::vector<std::int8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = quantize_value(values[i], p);
  return out;
}

BiasStorage quantize_bias_for_mode(const Tensor& bias, QuantMode mode, const QuantizationParams& weight_params,
                                   const std::vector<QuantizationParams>& sites, std::size_t site) {
  if (mode == QuantMode::dynamic_activations) {
    return std::vector<float>(bias.data().begin(), bias.data().end());
  }
  const double bias_scale = static_cast<double>(weight_params.scale) * static_cast<double>(sites[site].scale);
  std::vector<std::int32_t> q(bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) q[i] = quantize_bias(bias[i], bias_scale);
  return q;
}

std::size_t bias_length(const BiasStorage& bias) {
  return std::visit([](const auto& v) { return v.size(); }, bias);
}

QuantizedModel quantize_model(const ModelGraph& model, QuantMode mode, std::vector<QuantizationParams> sites) {
  std::vector<QLayer> layers;
  layers.reserve(model.layers().size());
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    layers.push_back(std::visit(
        Overloaded{
            [&](const Dense& d) -> QLayer {
              const QuantizationParams wp = compute_params_symmetric(d.weights);
              return QDense{quantize(d.weights, wp), quantize_bias_for_mode(d.bias, mode, wp, sites, i)};
            },
            [&](const Conv2D& c) -> QLayer {
              const QuantizationParams wp = compute_params_symmetric(c.kernels);
              return QConv2D{quantize(c.kernels, wp), quantize_bias_for_mode(c.bias, mode, wp, sites, i), c.stride,
                             c.padding};
            },
            [](const ReLU& l) -> QLayer { return l; },
            [](const MaxPool2D& l) -> QLayer { return l; },
            [](const Flatten& l) -> QLayer { return l; },
            [](const Softmax& l) -> QLayer { return l; },
        },
        model.layers()[i]));
  }
  return QuantizedModel(model.input_shape(), std::move(layers), model.labels(), mode, std::move(sites));
}

// Input-side parameters for the linear layer fed by `site`.
QuantizationParams activation_params(const QuantizedModel& model, std::size_t site, const Tensor& activation,
                                     OpCounters& counters) {
  if (model.mode() == QuantMode::static_activations) return model.activation_params()[site];
  ++counters.range_scans;
  return compute_params_asymmetric(activation);
}

std::vector<std::int64_t> bias_in_accumulator_units(const BiasStorage& bias, double bias_scale) {
  return std::visit(Overloaded{
                        [](const std::vector<std::int32_t>& q) {
                          return std::vector<std::int64_t>(q.begin(), q.end());
                        },
                        [&](const std::vector<float>& f) {
                          std::vector<std::int64_t> q(f.size());
                          for (std::size_t i = 0; i < f.size(); ++i) q[i] = quantize_bias(f[i], bias_scale);
                          return q;
                        },
                    },
                    bias);
}

Tensor rescale(const Shape& shape, const std::vector<std::int32_t>& acc, const std::vector<std::int64_t>& bias,
               std::size_t per_bias, double bias_scale) {
  Tensor y(shape);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const std::int64_t total = static_cast<std::int64_t>(acc[i]) + bias[i / per_bias];
    y[i] = static_cast<float>(bias_scale * static_cast<double>(total));
  }
  return y;
}

}  // namespace

std::pair<std::int32_t, std::int32_t> clamp_range(QuantScheme scheme) {
  return scheme == QuantScheme::symmetric ? std::pair{-kSymmetricLimit, kSymmetricLimit} : std::pair{-128, 127};
}

void validate(const QuantizationParams& params) {
  if (!(params.scale > 0.0f) || !std::isfinite(params.scale)) {
    throw InvalidDataError("quantization scale must be positive and finite");
  }
  if (params.zero_point < -128 || params.zero_point > 127) {
    throw InvalidDataError("zero point " + std::to_string(params.zero_point) + " outside int8");
  }
  if (params.scheme == QuantScheme::symmetric && params.zero_point != 0) {
    throw InvalidDataError("symmetric quantization requires zero point 0");
  }
}

double round_half_even(double v) {
  const double lower = std::floor(v);
  const double diff = v - lower;
  if (diff < 0.5) return lower;
  if (diff > 0.5) return lower + 1.0;
  return std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
}

QuantizationParams compute_params_symmetric(std::span<const float> values) {
  require_finite(values);
  float max_abs = 0.0f;
  for (float v : values) max_abs = std::max(max_abs, std::fabs(v));
  QuantizationParams p{1.0f, 0, QuantScheme::symmetric};
  if (max_abs > 0.0f) {
    p.scale = max_abs / static_cast<float>(kSymmetricLimit);
    if (!(p.scale > 0.0f)) p.scale = std::numeric_limits<float>::min();
  }
  return p;
}

QuantizationParams asymmetric_params_for_range(float lo, float hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw InvalidDataError("invalid activation range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  lo = std::min(lo, 0.0f);
  hi = std::max(hi, 0.0f);
  QuantizationParams p{1.0f, 0, QuantScheme::asymmetric};
  if (hi > lo) {
    // Round the scale up when needed so 255 steps still span [lo, hi].
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    p.scale = static_cast<float>(span / kAsymmetricLevels);
    if (static_cast<double>(p.scale) * kAsymmetricLevels < span) {
      p.scale = std::nextafter(p.scale, std::numeric_limits<float>::infinity());
    }
    if (!(p.scale > 0.0f)) p.scale = std::numeric_limits<float>::min();
  }
  const double shift = round_half_even(static_cast<double>(lo) / static_cast<double>(p.scale));
  p.zero_point = static_cast<std::int32_t>(std::clamp(-128.0 - shift, -128.0, 127.0));
  return p;
}

QuantizationParams compute_params_asymmetric(std::span<const float> values) {
  require_finite(values);
  if (values.empty()) return asymmetric_params_for_range(0.0f, 0.0f);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return asymmetric_params_for_range(*lo, *hi);
}

QTensor::QTensor(Shape shape, std::vector<std::int8_t> qdata, QuantizationParams params)
    : shape_(std::move(shape)), qdata_(std::move(qdata)), params_(params) {
  validate(params_);
  if (shape_.empty() || qdata_.size() != element_count(shape_)) {
    throw DimensionError("qtensor of shape " + to_string(shape_) + " holds " + std::to_string(qdata_.size()) +
                         " values");
  }
  const auto [lo, hi] = clamp_range(params_.scheme);
  for (std::int8_t q : qdata_) {
    if (q < lo || q > hi) throw InvalidDataError("int8 value " + std::to_string(q) + " outside scheme range");
  }
}

std::int8_t quantize_value(float v, const QuantizationParams& p) {
  if (std::isnan(v)) throw InvalidDataError("cannot quantize NaN");
  const auto [lo, hi] = clamp_range(p.scheme);
  const double q = round_half_even(static_cast<double>(v) / static_cast<double>(p.scale)) + p.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, static_cast<double>(lo), static_cast<double>(hi)));
}

QTensor quantize(const Tensor& t, const QuantizationParams& p) {
  validate(p);
  return QTensor(t.shape(), quantize_values(t.data(), p), p);
}

Tensor dequantize(const QTensor& q) {
  Tensor out(q.shape());
  const double scale = q.params().scale;
  const std::int32_t zp = q.params().zero_point;
  const auto data = q.qdata();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = static_cast<float>(scale * static_cast<double>(static_cast<std::int32_t>(data[i]) - zp));
  }
  return out;
}

CalibrationStats calibrate(const ModelGraph& model, std::span<const Tensor> samples) {
  if (samples.empty()) throw CalibrationError("calibration needs at least one sample");
  CalibrationStats stats;
  stats.sites.resize(model.layers().size() + 1);
  std::vector<bool> seen(stats.sites.size(), false);
  for (const Tensor& sample : samples) {
    forward_fp32(model, sample, [&](std::size_t site, const Tensor& a) {
      const auto [lo, hi] = std::minmax_element(a.data().begin(), a.data().end());
      SiteRange& r = stats.sites[site];
      if (!seen[site]) {
        r = {*lo, *hi};
        seen[site] = true;
      } else {
        r.min = std::min(r.min, *lo);
        r.max = std::max(r.max, *hi);
      }
    });
    ++stats.sample_count;
  }
  return stats;
}

QuantizedModel::QuantizedModel(Shape input_shape, std::vector<QLayer> layers, std::vector<std::string> labels,
                               QuantMode mode, std::vector<QuantizationParams> activation_params)
    : input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      labels_(std::move(labels)),
      mode_(mode),
      activation_params_(std::move(activation_params)) {
  const std::size_t sites = activation_shapes().size();
  if (mode_ == QuantMode::static_activations) {
    if (activation_params_.size() != sites) {
      throw CalibrationError("static model needs " + std::to_string(sites) + " activation parameter sets, got " +
                             std::to_string(activation_params_.size()));
    }
    for (const QuantizationParams& p : activation_params_) {
      validate(p);
      if (p.scheme != QuantScheme::asymmetric) throw InvalidDataError("activation parameters must be asymmetric");
    }
  } else if (!activation_params_.empty()) {
    throw InvalidDataError("dynamic model must not carry activation parameters");
  }
  const bool want_int = mode_ == QuantMode::static_activations;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const BiasStorage* bias = nullptr;
    const QTensor* weights = nullptr;
    if (const auto* d = std::get_if<QDense>(&layers_[i])) bias = &d->bias, weights = &d->weights;
    if (const auto* c = std::get_if<QConv2D>(&layers_[i])) bias = &c->bias, weights = &c->kernels;
    if (bias == nullptr) continue;
    if (std::holds_alternative<std::vector<std::int32_t>>(*bias) != want_int) {
      throw InvalidDataError("layer " + std::to_string(i) + ": bias storage does not match quantization mode");
    }
    if (weights->params().scheme != QuantScheme::symmetric) {
      throw InvalidDataError("layer " + std::to_string(i) + ": weights must be symmetric");
    }
  }
}

std::vector<Shape> QuantizedModel::activation_shapes() const {
  if (input_shape_.empty() || element_count(input_shape_) == 0) {
    throw DimensionError("model input shape " + to_string(input_shape_) + " is empty");
  }
  std::vector<Shape> shapes{input_shape_};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (std::holds_alternative<Softmax>(layers_[i]) && i + 1 != layers_.size()) {
      throw DimensionError("Softmax may only be the final layer (found at layer " + std::to_string(i) + ")");
    }
    const Shape& in = shapes.back();
    try {
      shapes.push_back(std::visit(
          Overloaded{
              [&](const QDense& d) {
                const Shape out = dense_output_shape(d.weights.shape(), bias_length(d.bias), in);
                if (in[0] > kMaxFanIn) throw DimensionError("Dense fan-in too large for int32 accumulation");
                return out;
              },
              [&](const QConv2D& c) {
                const Shape& k = c.kernels.shape();
                const Shape out = conv2d_output_shape(k, bias_length(c.bias), c.stride, c.padding, in);
                if (k[1] * k[2] * k[3] > kMaxFanIn) {
                  throw DimensionError("Conv2D fan-in too large for int32 accumulation");
                }
                return out;
              },
              [&](const ReLU& l) { return output_shape(l, in); },
              [&](const MaxPool2D& l) { return output_shape(l, in); },
              [&](const Flatten& l) { return output_shape(l, in); },
              [&](const Softmax& l) { return output_shape(l, in); },
          },
          layers_[i]));
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  if (element_count(shapes.back()) != labels_.size()) {
    throw DimensionError("model output " + to_string(shapes.back()) + " does not match " +
                         std::to_string(labels_.size()) + " labels");
  }
  return shapes;
}

QuantizedModel quantize_model_static(const ModelGraph& model, const CalibrationStats& stats) {
  const std::size_t sites = model.layers().size() + 1;
  if (stats.sample_count < 1 || stats.sites.size() != sites) {
    throw CalibrationError("calibration covers " + std::to_string(stats.sites.size()) + " of " +
                           std::to_string(sites) + " activation sites");
  }
  std::vector<QuantizationParams> params;
  params.reserve(sites);
  for (const SiteRange& r : stats.sites) params.push_back(asymmetric_params_for_range(r.min, r.max));
  return quantize_model(model, QuantMode::static_activations, std::move(params));
}

QuantizedModel quantize_model_dynamic(const ModelGraph& model) {
  return quantize_model(model, QuantMode::dynamic_activations, {});
}

std::vector<std::int32_t> int8_dense_accumulate(const QTensor& weights, std::span<const std::int8_t> x,
                                                std::int32_t x_zero_point, OpCounters& counters) {
  const Shape& w = weights.shape();
  if (w.size() != 2 || x.size() != w[1]) {
    throw DimensionError("int8 dense: weights " + to_string(w) + " vs input of " + std::to_string(x.size()));
  }
  if (w[1] > kMaxFanIn) throw DimensionError("int8 dense: fan-in too large for int32 accumulation");
  const std::size_t out = w[0], in = w[1];
  // x - zp lies in [-255, 255]; int16 operands let the compiler emit
  // widening multiply-add instructions.
  std::vector<std::int16_t> centered(in);
  for (std::size_t j = 0; j < in; ++j) centered[j] = static_cast<std::int16_t>(x[j] - x_zero_point);
  std::vector<std::int32_t> acc(out);
  const std::int8_t* wq = weights.qdata().data();
  for (std::size_t i = 0; i < out; ++i) {
    const std::int8_t* row = wq + i * in;
    std::int32_t sum = 0;
    for (std::size_t j = 0; j < in; ++j) sum += static_cast<std::int16_t>(row[j]) * centered[j];
    acc[i] = sum;
  }
  counters.int_mul_adds += static_cast<std::uint64_t>(out) * in;
  return acc;
}

std::vector<std::int32_t> int8_conv_accumulate(const QTensor& kernels, std::size_t stride, std::size_t padding,
                                               const Shape& x_shape, std::span<const std::int8_t> x,
                                               std::int32_t x_zero_point, OpCounters& counters) {
  const Shape& k = kernels.shape();
  const Shape out_shape = conv2d_output_shape(k, k.empty() ? 0 : k[0], stride, padding, x_shape);
  if (x.size() != element_count(x_shape)) throw DimensionError("int8 conv: input size does not match its shape");
  if (k[1] * k[2] * k[3] > kMaxFanIn) throw DimensionError("int8 conv: fan-in too large for int32 accumulation");
  const std::size_t out_c = k[0], in_c = k[1], kh = k[2], kw = k[3];
  const std::size_t in_h = x_shape[1], in_w = x_shape[2];
  const std::size_t out_h = out_shape[1], out_w = out_shape[2];
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  const std::int8_t* kq = kernels.qdata().data();
  std::vector<std::int32_t> acc(out_c * out_h * out_w);
  for (std::size_t o = 0; o < out_c; ++o) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::int32_t sum = 0;
        for (std::size_t c = 0; c < in_c; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
              const std::int32_t xv =
                  x[(c * in_h + static_cast<std::size_t>(iy)) * in_w + static_cast<std::size_t>(ix)];
              sum += static_cast<std::int32_t>(kq[((o * in_c + c) * kh + ky) * kw + kx]) * (xv - x_zero_point);
            }
          }
        }
        acc[(o * out_h + oy) * out_w + ox] = sum;
      }
    }
  }
  counters.int_mul_adds += static_cast<std::uint64_t>(out_c) * in_c * kh * kw * out_h * out_w;
  return acc;
}

ForwardResult forward_quantized(const QuantizedModel& model, const Tensor& x) {
  if (x.shape() != model.input_shape()) {
    throw DimensionError("input " + to_string(x.shape()) + " does not match model input " +
                         to_string(model.input_shape()));
  }
  ForwardResult result{x, {}};
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Tensor& a = result.output;
    OpCounters& counters = result.counters;
    a = std::visit(Overloaded{
                       [&](const QDense& d) {
                         const QuantizationParams xp = activation_params(model, i, a, counters);
                         const std::vector<std::int8_t> qx = quantize_values(a.data(), xp);
                         const auto acc = int8_dense_accumulate(d.weights, qx, xp.zero_point, counters);
                         const double bias_scale = static_cast<double>(d.weights.params().scale) * xp.scale;
                         return rescale({acc.size()}, acc, bias_in_accumulator_units(d.bias, bias_scale), 1,
                                        bias_scale);
                       },
                       [&](const QConv2D& c) {
                         const QuantizationParams xp = activation_params(model, i, a, counters);
                         const std::vector<std::int8_t> qx = quantize_values(a.data(), xp);
                         const auto acc = int8_conv_accumulate(c.kernels, c.stride, c.padding, a.shape(), qx,
                                                               xp.zero_point, counters);
                         const double bias_scale = static_cast<double>(c.kernels.params().scale) * xp.scale;
                         const Shape out_shape = conv2d_output_shape(c.kernels.shape(), bias_length(c.bias),
                                                                     c.stride, c.padding, a.shape());
                         return rescale(out_shape, acc, bias_in_accumulator_units(c.bias, bias_scale),
                                        out_shape[1] * out_shape[2], bias_scale);
                       },
                       [&](const ReLU&) { return relu(a); },
                       [&](const MaxPool2D& p) { return max_pool2d(a, p.window); },
                       [&](const Flatten&) { return flatten(a); },
                       [&](const Softmax&) { return softmax(a); },
                   },
                   layers[i]);
  }
  return result;
}

double size_report(std::size_t fp32_bytes, std::size_t quantized_bytes) {
  if (fp32_bytes == 0 || quantized_bytes == 0) throw InvalidDataError("size_report needs nonzero byte counts");
  return static_cast<double>(fp32_bytes) / static_cast<double>(quantized_bytes);
}

}  // namespace emlops
