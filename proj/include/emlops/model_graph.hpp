#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "emlops/tensor.hpp"

namespace emlops {

/// Fully connected layer. weights: [out, in], bias: [out].
struct Dense {
  Tensor weights;
  Tensor bias;
  bool operator==(const Dense&) const = default;
};

/// 2-D cross-correlation. kernels: [outC, inC, kH, kW], bias: [outC].
struct Conv2D {
  Tensor kernels;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const Conv2D&) const = default;
};

struct ReLU {
  bool operator==(const ReLU&) const = default;
};

/// Non-overlapping max pooling over [C, H, W]; stride equals the window.
struct MaxPool2D {
  std::size_t window = 2;
  bool operator==(const MaxPool2D&) const = default;
};

struct Flatten {
  bool operator==(const Flatten&) const = default;
};

struct Softmax {
  bool operator==(const Softmax&) const = default;
};

using Layer = std::variant<Dense, Conv2D, ReLU, MaxPool2D, Flatten, Softmax>;

std::string_view layer_name(const Layer& layer);

Shape dense_output_shape(const Shape& weights, std::size_t bias_len, const Shape& input);
Shape conv2d_output_shape(const Shape& kernels, std::size_t bias_len, std::size_t stride, std::size_t padding,
                          const Shape& input);

/// Output shape of `layer` applied to `input`; throws DimensionError.
Shape output_shape(const Layer& layer, const Shape& input);

/// Ordered layer stack with a fixed input shape and one label per output.
class ModelGraph {
 public:
  ModelGraph(Shape input_shape, std::vector<Layer> layers, std::vector<std::string> labels);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// Shapes of every activation site: site 0 is the model input, site i+1
  /// the output of layer i.
  std::vector<Shape> activation_shapes() const;

  std::size_t parameter_count() const;

  bool operator==(const ModelGraph&) const = default;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<std::string> labels_;
};

Tensor dense_forward(const Tensor& weights, const Tensor& bias, const Tensor& x, OpCounters& counters);
Tensor conv2d_forward(const Conv2D& layer, const Tensor& x, OpCounters& counters);
Tensor relu(const Tensor& x);
Tensor max_pool2d(const Tensor& x, std::size_t window);
Tensor flatten(const Tensor& x);
Tensor softmax(const Tensor& x);

/// Smallest index attaining the maximum.
std::size_t argmax(const Tensor& x);

struct ForwardResult {
  Tensor output;
  OpCounters counters;
};

/// Called with (site index, activation) for every activation site.
using ActivationObserver = std::function<void(std::size_t, const Tensor&)>;

ForwardResult forward_fp32(const ModelGraph& model, const Tensor& x,
                           const ActivationObserver& observe = {});

}  // namespace emlops
