#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emlops/model_graph.hpp"
#include "emlops/model_package.hpp"

namespace emlops::toy {

/// Synthetic stand-in for inspection imagery. Class c draws stripes whose
/// orientation is c % 4 (horizontal, vertical, diagonal, anti-diagonal) and
/// whose period is 4 + 2 * (c / 4), at a random phase, plus Gaussian pixel
/// noise of `noise` * 255. Everything derives from `seed` via Xoshiro256.
struct ToyDatasetSpec {
  std::uint64_t seed = 42;
  std::size_t classes = 3;
  std::size_t samples_per_class = 100;
  std::size_t height = 16;
  std::size_t width = 16;
  float noise = 0.15f;

  void validate() const;
};

struct ToySample {
  Tensor image;  // [1, H, W], integer pixel values in [0, 255]
  std::size_t label = 0;
};

/// Train and test splits each hold samples_per_class images per class,
/// interleaved by class (sample i has label i % classes).
struct ToyDataset {
  std::vector<std::string> labels;
  std::vector<ToySample> train;
  std::vector<ToySample> test;
};

std::vector<std::string> default_labels(std::size_t classes);
std::map<std::string, Condition> default_condition_map(const std::vector<std::string>& labels);

ToyDataset make_dataset(const ToyDatasetSpec& spec);

/// One image of class `label`, drawn from its own seed.
ToySample make_sample(const ToyDatasetSpec& spec, std::size_t label, std::uint64_t sample_seed);

struct TrainOptions {
  std::size_t epochs = 150;
  float learning_rate = 0.5f;
  std::size_t hidden = 392;
};

struct TrainResult {
  ModelGraph model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
};

/// Flatten -> Dense(hidden) -> ReLU -> Dense(classes) -> Softmax, trained by
/// full-batch gradient descent on cross-entropy. Throws TrainingError if the
/// loss stops being finite.
TrainResult train(const ToyDataset& data, const TrainOptions& options, std::uint64_t seed);

/// Model input for a toy image (pixel values scaled into [0, 1]).
Tensor to_input(const ToySample& sample, const Shape& input_shape);

/// Fraction of samples whose argmax matches their label.
double accuracy(const ModelVariant& model, const std::vector<ToySample>& samples);

/// First `count` training inputs (the default calibration set).
std::vector<Tensor> calibration_inputs(const ToyDataset& data, const Shape& input_shape, std::size_t count = 32);

}  // namespace emlops::toy
