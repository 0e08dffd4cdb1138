#include "emlops/model_graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "emlops/errors.hpp"
#include "emlops/overloaded.hpp"

namespace emlops {

namespace {

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const std::size_t padded = in + 2 * padding;
  if (stride == 0 || padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

}  // namespace

Shape dense_output_shape(const Shape& weights, std::size_t bias_len, const Shape& input) {
  if (weights.size() != 2 || bias_len != weights[0]) {
    throw DimensionError("Dense weights " + to_string(weights) + " and bias [" + std::to_string(bias_len) +
                         "] are inconsistent");
  }
  if (input != Shape{weights[1]}) {
    throw DimensionError("Dense expects input [" + std::to_string(weights[1]) + "], got " + to_string(input));
  }
  return {weights[0]};
}

Shape conv2d_output_shape(const Shape& kernels, std::size_t bias_len, std::size_t stride, std::size_t padding,
                          const Shape& input) {
  const Shape& k = kernels;
  if (k.size() != 4 || bias_len != k[0]) {
    throw DimensionError("Conv2D kernels " + to_string(k) + " and bias [" + std::to_string(bias_len) +
                         "] are inconsistent");
  }
  if (stride < 1) throw DimensionError("Conv2D stride must be >= 1");
  if (input.size() != 3 || input[0] != k[1]) {
    throw DimensionError("Conv2D expects input [" + std::to_string(k[1]) + ",H,W], got " + to_string(input));
  }
  const std::size_t h = conv_extent(input[1], k[2], stride, padding);
  const std::size_t w = conv_extent(input[2], k[3], stride, padding);
  if (h < 1 || w < 1) {
    throw DimensionError("Conv2D output would be empty for input " + to_string(input) + " and kernels " +
                         to_string(k));
  }
  return {k[0], h, w};
}

std::string_view layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense&) { return std::string_view("Dense"); },
                        [](const Conv2D&) { return std::string_view("Conv2D"); },
                        [](const ReLU&) { return std::string_view("ReLU"); },
                        [](const MaxPool2D&) { return std::string_view("MaxPool2D"); },
                        [](const Flatten&) { return std::string_view("Flatten"); },
                        [](const Softmax&) { return std::string_view("Softmax"); },
                    },
                    layer);
}

Shape output_shape(const Layer& layer, const Shape& input) {
  return std::visit(
      Overloaded{
          [&](const Dense& d) {
            if (d.bias.rank() != 1) throw DimensionError("Dense bias must be a vector");
            return dense_output_shape(d.weights.shape(), d.bias.size(), input);
          },
          [&](const Conv2D& c) {
            if (c.bias.rank() != 1) throw DimensionError("Conv2D bias must be a vector");
            return conv2d_output_shape(c.kernels.shape(), c.bias.size(), c.stride, c.padding, input);
          },
          [&](const ReLU&) -> Shape { return input; },
          [&](const MaxPool2D& p) -> Shape {
            if (p.window < 1) throw DimensionError("MaxPool2D window must be >= 1");
            if (input.size() != 3) throw DimensionError("MaxPool2D expects [C,H,W], got " + to_string(input));
            const std::size_t h = input[1] / p.window;
            const std::size_t w = input[2] / p.window;
            if (h < 1 || w < 1) throw DimensionError("MaxPool2D window larger than input " + to_string(input));
            return {input[0], h, w};
          },
          [&](const Flatten&) -> Shape { return {element_count(input)}; },
          [&](const Softmax&) -> Shape {
            if (input.size() != 1) throw DimensionError("Softmax expects a vector, got " + to_string(input));
            return input;
          },
      },
      layer);
}

ModelGraph::ModelGraph(Shape input_shape, std::vector<Layer> layers, std::vector<std::string> labels)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), labels_(std::move(labels)) {
  activation_shapes();
}

std::vector<Shape> ModelGraph::activation_shapes() const {
  if (input_shape_.empty() || element_count(input_shape_) == 0) {
    throw DimensionError("model input shape " + to_string(input_shape_) + " is empty");
  }
  std::vector<Shape> shapes{input_shape_};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (std::holds_alternative<Softmax>(layers_[i]) && i + 1 != layers_.size()) {
      throw DimensionError("Softmax may only be the final layer (found at layer " + std::to_string(i) + ")");
    }
    try {
      shapes.push_back(output_shape(layers_[i], shapes.back()));
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

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) {
    if (const auto* d = std::get_if<Dense>(&layer)) n += d->weights.size() + d->bias.size();
    if (const auto* c = std::get_if<Conv2D>(&layer)) n += c->kernels.size() + c->bias.size();
  }
  return n;
}

Tensor dense_forward(const Tensor& weights, const Tensor& bias, const Tensor& x, OpCounters& counters) {
  if (bias.rank() != 1) throw DimensionError("Dense bias must be a vector");
  const Shape out_shape = dense_output_shape(weights.shape(), bias.size(), x.shape());
  const std::size_t out = weights.shape()[0];
  const std::size_t in = weights.shape()[1];
  Tensor y(out_shape);
  const float* w = weights.data().data();
  const float* xv = x.data().data();
  for (std::size_t i = 0; i < out; ++i) {
    float acc = 0.0f;
    const float* row = w + i * in;
    for (std::size_t j = 0; j < in; ++j) acc += row[j] * xv[j];
    y[i] = acc + bias[i];
  }
  counters.float_mul_adds += static_cast<std::uint64_t>(out) * in;
  return y;
}

Tensor conv2d_forward(const Conv2D& layer, const Tensor& x, OpCounters& counters) {
  const Shape out_shape = output_shape(layer, x.shape());
  const Shape& k = layer.kernels.shape();
  const std::size_t out_c = k[0], in_c = k[1], kh = k[2], kw = k[3];
  const std::size_t in_h = x.shape()[1], in_w = x.shape()[2];
  const std::size_t out_h = out_shape[1], out_w = out_shape[2];
  const auto pad = static_cast<std::ptrdiff_t>(layer.padding);
  Tensor y(out_shape);
  for (std::size_t o = 0; o < out_c; ++o) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < in_c; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * layer.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * layer.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
              acc += layer.kernels[((o * in_c + c) * kh + ky) * kw + kx] *
                     x[(c * in_h + static_cast<std::size_t>(iy)) * in_w + static_cast<std::size_t>(ix)];
            }
          }
        }
        y[(o * out_h + oy) * out_w + ox] = acc + layer.bias[o];
      }
    }
  }
  counters.float_mul_adds += static_cast<std::uint64_t>(out_c) * in_c * kh * kw * out_h * out_w;
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data()) v = std::max(v, 0.0f);
  return y;
}

Tensor max_pool2d(const Tensor& x, std::size_t window) {
  const Shape out_shape = output_shape(MaxPool2D{window}, x.shape());
  const std::size_t channels = x.shape()[0], in_h = x.shape()[1], in_w = x.shape()[2];
  const std::size_t out_h = out_shape[1], out_w = out_shape[2];
  Tensor y(out_shape);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        float best = x[(c * in_h + oy * window) * in_w + ox * window];
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            best = std::max(best, x[(c * in_h + oy * window + dy) * in_w + ox * window + dx]);
          }
        }
        y[(c * out_h + oy) * out_w + ox] = best;
      }
    }
  }
  return y;
}

Tensor flatten(const Tensor& x) {
  return x.reshaped({x.size()});
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1 || x.empty()) throw DimensionError("softmax expects a non-empty vector");
  const float peak = *std::max_element(x.data().begin(), x.data().end());
  std::vector<double> e(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - static_cast<double>(peak));
    total += e[i];
  }
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(e[i] / total);
  return y;
}

std::size_t argmax(const Tensor& x) {
  if (x.empty()) throw DimensionError("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

ForwardResult forward_fp32(const ModelGraph& model, const Tensor& x, const ActivationObserver& observe) {
  if (x.shape() != model.input_shape()) {
    throw DimensionError("input " + to_string(x.shape()) + " does not match model input " +
                         to_string(model.input_shape()));
  }
  ForwardResult result{x, {}};
  if (observe) observe(0, result.output);
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Tensor& a = result.output;
    OpCounters& counters = result.counters;
    try {
      a = std::visit(Overloaded{
                         [&](const Dense& d) { return dense_forward(d.weights, d.bias, a, counters); },
                         [&](const Conv2D& c) { return conv2d_forward(c, a, counters); },
                         [&](const ReLU&) { return relu(a); },
                         [&](const MaxPool2D& p) { return max_pool2d(a, p.window); },
                         [&](const Flatten&) { return flatten(a); },
                         [&](const Softmax&) { return softmax(a); },
                     },
                     layers[i]);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
    if (observe) observe(i + 1, a);
  }
  return result;
}

}  // namespace emlops
