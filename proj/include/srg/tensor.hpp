#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "srg/errors.hpp"

namespace srg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor. `grad` is empty until a gradient is attached.
template <typename T>
struct BasicTensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;

  BasicTensor() = default;
  explicit BasicTensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(shape_numel(shape), fill) {
    check_shape();
  }
  BasicTensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    check_shape();
    if (data.size() != shape_numel(shape)) {
      throw DimensionError("tensor", "data", shape_numel(shape), data.size());
    }
  }

  std::size_t numel() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad.assign(data.size(), T{0}); }

 private:
  void check_shape() const {
    for (std::size_t a = 0; a < shape.size(); ++a) {
      if (shape[a] == 0) throw DimensionError("tensor", "axis " + std::to_string(a), "size must be positive");
    }
  }
};

using Tensor = BasicTensor<float>;

}  // namespace srg
