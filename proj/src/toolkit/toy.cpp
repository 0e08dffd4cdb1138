#include "emlops/toy.hpp"

#include <algorithm>
#include <cmath>

#include "emlops/errors.hpp"
#include "emlops/prng.hpp"
#include "emlops/vqi.hpp"

namespace emlops::toy {

namespace {

// Keeps weight-init draws independent of the data stream for the same seed.
constexpr std::uint64_t kInitStream = 0x5eedf00dcafe1234ULL;

std::size_t predicted(const ModelVariant& model, const Tensor& input) {
  return argmax(vqi::forward(model, input).output);
}

}  // namespace

void ToyDatasetSpec::validate() const {
  if (classes < 1) throw UsageError("toy dataset needs at least one class");
  if (samples_per_class < 1) throw UsageError("toy dataset needs at least one sample per class");
  if (height < 2 || width < 2) throw UsageError("toy images must be at least 2x2");
  if (!(noise >= 0.0f) || !std::isfinite(noise)) throw UsageError("noise level must be a finite value >= 0");
}

std::vector<std::string> default_labels(std::size_t classes) {
  if (classes == 3) return {"pole_ok", "pole_degraded", "pole_critical"};
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < classes; ++i) labels.push_back("class_" + std::to_string(i));
  return labels;
}

std::map<std::string, Condition> default_condition_map(const std::vector<std::string>& labels) {
  std::map<std::string, Condition> map;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Condition c = Condition::degraded;
    if (i == 0) c = Condition::ok;
    else if (i + 1 == labels.size()) c = Condition::critical;
    map[labels[i]] = c;
  }
  return map;
}

ToySample make_sample(const ToyDatasetSpec& spec, std::size_t label, std::uint64_t sample_seed) {
  Xoshiro256 rng(sample_seed);
  const std::size_t orientation = label % 4;
  const std::size_t period = 4 + 2 * (label / 4);
  const std::size_t phase = rng.below(period);
  const double high = 190.0 + static_cast<double>(rng.below(41));
  const double low = 40.0 + static_cast<double>(rng.below(41));
  const double sigma = static_cast<double>(spec.noise) * 255.0;

  Tensor image({1, spec.height, spec.width});
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      std::size_t coord = 0;
      switch (orientation) {
        case 0: coord = y; break;
        case 1: coord = x; break;
        case 2: coord = x + y; break;
        default: coord = x + period * spec.height - y; break;
      }
      const bool on = (coord + phase) % period < period / 2;
      const double v = (on ? high : low) + sigma * rng.normal();
      image[y * spec.width + x] = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return {std::move(image), label};
}

ToyDataset make_dataset(const ToyDatasetSpec& spec) {
  spec.validate();
  ToyDataset data;
  data.labels = default_labels(spec.classes);
  Xoshiro256 master(spec.seed);
  const std::size_t n = spec.classes * spec.samples_per_class;
  for (auto* split : {&data.train, &data.test}) {
    split->reserve(n);
    for (std::size_t i = 0; i < n; ++i) split->push_back(make_sample(spec, i % spec.classes, master.next()));
  }
  return data;
}

Tensor to_input(const ToySample& sample, const Shape& input_shape) {
  return vqi::preprocess(sample.image, input_shape);
}

double accuracy(const ModelVariant& model, const std::vector<ToySample>& samples) {
  if (samples.empty()) return 0.0;
  const Shape& shape = input_shape_of(model);
  std::size_t hits = 0;
  for (const ToySample& s : samples) hits += predicted(model, to_input(s, shape)) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::vector<Tensor> calibration_inputs(const ToyDataset& data, const Shape& input_shape, std::size_t count) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < std::min(count, data.train.size()); ++i) out.push_back(to_input(data.train[i], input_shape));
  return out;
}

TrainResult train(const ToyDataset& data, const TrainOptions& options, std::uint64_t seed) {
  if (data.train.empty()) throw TrainingError("empty training set");
  if (options.hidden < 1) throw TrainingError("hidden layer needs at least one unit");
  if (!(options.learning_rate > 0.0f)) throw TrainingError("learning rate must be positive");

  const Shape input_shape = data.train.front().image.shape();
  const std::size_t n = data.train.size();
  const std::size_t in = element_count(input_shape);
  const std::size_t hidden = options.hidden;
  const std::size_t classes = data.labels.size();

  std::vector<float> x(n * in);
  for (std::size_t s = 0; s < n; ++s) {
    const Tensor t = to_input(data.train[s], input_shape);
    std::copy(t.data().begin(), t.data().end(), x.begin() + static_cast<std::ptrdiff_t>(s * in));
  }

  // Layer-1 weights are kept transposed ([in][hidden]) so every hot loop is
  // an axpy over contiguous memory.
  Xoshiro256 init(seed ^ kInitStream);
  std::vector<float> w1t(in * hidden), b1(hidden, 0.0f), w2(classes * hidden), b2(classes, 0.0f);
  const double std1 = std::sqrt(2.0 / static_cast<double>(in));
  const double std2 = std::sqrt(2.0 / static_cast<double>(hidden));
  for (std::size_t h = 0; h < hidden; ++h) {
    for (std::size_t k = 0; k < in; ++k) w1t[k * hidden + h] = static_cast<float>(std1 * init.normal());
  }
  for (float& w : w2) w = static_cast<float>(std2 * init.normal());

  std::vector<float> z(n * hidden), a(n * hidden), dz(n * hidden), probs(n * classes);
  std::vector<float> gw1t(in * hidden), gb1(hidden), gw2(classes * hidden), gb2(classes);
  double loss = 0.0;
  const float lr = options.learning_rate;
  const float inv_n = 1.0f / static_cast<float>(n);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    // Forward.
    for (std::size_t s = 0; s < n; ++s) {
      float* zs = &z[s * hidden];
      std::copy(b1.begin(), b1.end(), zs);
      const float* xs = &x[s * in];
      for (std::size_t k = 0; k < in; ++k) {
        const float xv = xs[k];
        if (xv == 0.0f) continue;
        const float* wk = &w1t[k * hidden];
        for (std::size_t h = 0; h < hidden; ++h) zs[h] += xv * wk[h];
      }
      float* as = &a[s * hidden];
      for (std::size_t h = 0; h < hidden; ++h) as[h] = std::max(zs[h], 0.0f);
    }
    loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const float* as = &a[s * hidden];
      float* ps = &probs[s * classes];
      for (std::size_t c = 0; c < classes; ++c) {
        const float* wc = &w2[c * hidden];
        float acc = b2[c];
        for (std::size_t h = 0; h < hidden; ++h) acc += wc[h] * as[h];
        ps[c] = acc;
      }
      const float peak = *std::max_element(ps, ps + classes);
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) total += std::exp(static_cast<double>(ps[c] - peak));
      for (std::size_t c = 0; c < classes; ++c) {
        ps[c] = static_cast<float>(std::exp(static_cast<double>(ps[c] - peak)) / total);
      }
      loss -= std::log(std::max(static_cast<double>(ps[data.train[s].label]), 1e-30));
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) {
      throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + "; try a lower learning rate");
    }

    // Backward. dlogits = (p - onehot) / n, stored in place.
    std::fill(gw2.begin(), gw2.end(), 0.0f);
    std::fill(gb2.begin(), gb2.end(), 0.0f);
    std::fill(gw1t.begin(), gw1t.end(), 0.0f);
    std::fill(gb1.begin(), gb1.end(), 0.0f);
    for (std::size_t s = 0; s < n; ++s) {
      float* ps = &probs[s * classes];
      ps[data.train[s].label] -= 1.0f;
      for (std::size_t c = 0; c < classes; ++c) ps[c] *= inv_n;
      const float* as = &a[s * hidden];
      const float* zs = &z[s * hidden];
      float* dzs = &dz[s * hidden];
      std::fill(dzs, dzs + hidden, 0.0f);
      for (std::size_t c = 0; c < classes; ++c) {
        const float g = ps[c];
        gb2[c] += g;
        float* gwc = &gw2[c * hidden];
        const float* wc = &w2[c * hidden];
        for (std::size_t h = 0; h < hidden; ++h) {
          gwc[h] += g * as[h];
          dzs[h] += g * wc[h];
        }
      }
      for (std::size_t h = 0; h < hidden; ++h) {
        if (zs[h] <= 0.0f) dzs[h] = 0.0f;
        gb1[h] += dzs[h];
      }
      const float* xs = &x[s * in];
      for (std::size_t k = 0; k < in; ++k) {
        const float xv = xs[k];
        if (xv == 0.0f) continue;
        float* gk = &gw1t[k * hidden];
        for (std::size_t h = 0; h < hidden; ++h) gk[h] += xv * dzs[h];
      }
    }
    for (std::size_t i = 0; i < w1t.size(); ++i) w1t[i] -= lr * gw1t[i];
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] -= lr * gb1[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] -= lr * gw2[i];
    for (std::size_t i = 0; i < b2.size(); ++i) b2[i] -= lr * gb2[i];
  }

  Tensor w1({hidden, in});
  for (std::size_t h = 0; h < hidden; ++h) {
    for (std::size_t k = 0; k < in; ++k) w1[h * in + k] = w1t[k * hidden + h];
  }
  std::vector<Layer> layers;
  layers.emplace_back(Flatten{});
  layers.emplace_back(Dense{std::move(w1), Tensor({hidden}, b1)});
  layers.emplace_back(ReLU{});
  layers.emplace_back(Dense{Tensor({classes, hidden}, w2), Tensor({classes}, b2)});
  layers.emplace_back(Softmax{});

  TrainResult result{ModelGraph(input_shape, std::move(layers), data.labels), 0.0, 0.0, loss};
  result.train_accuracy = accuracy(result.model, data.train);
  result.test_accuracy = accuracy(result.model, data.test);
  return result;
}

}  // namespace emlops::toy
