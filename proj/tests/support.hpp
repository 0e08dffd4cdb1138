#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "emlops/model_package.hpp"
#include "emlops/prng.hpp"
#include "emlops/quantization.hpp"
#include "emlops/timeutil.hpp"
#include "emlops/toy.hpp"

namespace emlops::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("emlops-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(Xoshiro256& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return t;
}

/// Small conv net covering every layer type: input [1,6,6].
inline ModelGraph small_conv_model(std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<Layer> layers;
  layers.emplace_back(Conv2D{random_tensor(rng, {2, 1, 3, 3}, -1, 1), random_tensor(rng, {2}, -0.5, 0.5), 1, 1});
  layers.emplace_back(ReLU{});
  layers.emplace_back(MaxPool2D{2});
  layers.emplace_back(Flatten{});
  layers.emplace_back(Dense{random_tensor(rng, {3, 18}, -1, 1), random_tensor(rng, {3}, -0.5, 0.5)});
  layers.emplace_back(Softmax{});
  return ModelGraph({1, 6, 6}, std::move(layers), {"pole_ok", "pole_degraded", "pole_critical"});
}

inline std::map<std::string, Condition> three_class_conditions() {
  return {{"pole_ok", Condition::ok}, {"pole_degraded", Condition::degraded}, {"pole_critical", Condition::critical}};
}

inline Bytes pack_bytes(const ModelVariant& model, const std::string& version, const std::string& name = "toy-vqi") {
  PackOptions o{name, version, three_class_conditions(), 0.5, "2024-01-01T00:00:00.000Z"};
  return pack(model, o).to_bytes();
}

/// Settable clock shared by copies of its Clock function.
class ManualClock {
 public:
  explicit ManualClock(TimePoint start = TimePoint(std::chrono::seconds(1'700'000'000)))
      : now_(std::make_shared<std::atomic<TimePoint::rep>>(start.time_since_epoch().count())) {}
  Clock clock() const {
    return [now = now_] { return TimePoint(TimePoint::duration(now->load())); };
  }
  TimePoint now() const { return TimePoint(TimePoint::duration(now_->load())); }
  void advance(std::chrono::milliseconds d) {
    now_->fetch_add(std::chrono::duration_cast<TimePoint::duration>(d).count());
  }

 private:
  std::shared_ptr<std::atomic<TimePoint::rep>> now_;
};

/// The default toy setup, trained once per process.
struct ToyFixture {
  toy::ToyDataset data;
  toy::TrainResult trained;
};

inline const ToyFixture& toy_fixture() {
  static const ToyFixture f = [] {
    toy::ToyDataset data = toy::make_dataset(toy::ToyDatasetSpec{});
    toy::TrainResult r = toy::train(data, toy::TrainOptions{}, 42);
    return ToyFixture{std::move(data), std::move(r)};
  }();
  return f;
}

}  // namespace emlops::testing
