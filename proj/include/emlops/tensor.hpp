#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace emlops {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense fp32 array, row-major. The data length always equals the product
/// of the shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  /// 1-D tensor from a literal list.
  static Tensor of(std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Same data, new shape with an identical element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Deterministic cost proxy for one inference: multiply-accumulates by
/// arithmetic domain plus the number of min/max passes over activations.
struct OpCounters {
  std::uint64_t float_mul_adds = 0;
  std::uint64_t int_mul_adds = 0;
  std::uint64_t range_scans = 0;

  OpCounters& operator+=(const OpCounters& other) {
    float_mul_adds += other.float_mul_adds;
    int_mul_adds += other.int_mul_adds;
    range_scans += other.range_scans;
    return *this;
  }
  bool operator==(const OpCounters&) const = default;
};

}  // namespace emlops
