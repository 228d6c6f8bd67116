#include "aftlab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace aftlab {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

TensorValue::TensorValue(std::vector<int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != numel())
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
}

TensorValue TensorValue::zeros(std::vector<int64_t> shape) {
  int64_t n = shape_numel(shape);
  return TensorValue(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

TensorValue TensorValue::full(std::vector<int64_t> shape, double v) {
  int64_t n = shape_numel(shape);
  return TensorValue(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

bool TensorValue::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

bool TensorValue::bitwise_equal(const TensorValue& o) const {
  if (shape != o.shape) return false;
  if (data.empty()) return true;
  return std::memcmp(data.data(), o.data.data(), data.size() * sizeof(double)) == 0;
}

}  // namespace aftlab
