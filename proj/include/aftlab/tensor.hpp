#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aftlab {

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

/// Dense tensor of 64-bit floats, row-major. Immutable by convention once it
/// is attached to a tape node; scalars are represented as shape {1}.
struct TensorValue {
  std::vector<int64_t> shape;
  std::vector<double> data;

  TensorValue() = default;
  TensorValue(std::vector<int64_t> s, std::vector<double> d);

  static TensorValue zeros(std::vector<int64_t> shape);
  static TensorValue full(std::vector<int64_t> shape, double v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  bool same_shape(const TensorValue& o) const { return shape == o.shape; }
  bool all_finite() const;
  bool bitwise_equal(const TensorValue& o) const;

  // 2-D / 4-D accessors for tests and small fixtures.
  double at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
};

}  // namespace aftlab
