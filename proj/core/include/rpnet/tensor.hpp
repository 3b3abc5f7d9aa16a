#ifndef RPNET_TENSOR_HPP
#define RPNET_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rpnet/errors.hpp"

namespace rpnet {

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

/// Dense row-major float32 tensor. `data.size() == product(shape)` always.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  }
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }
  static Tensor full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    for (float& x : t.data) x = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool is_scalar() const { return numel() == 1; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
};

/// Integer tensor, used for quantization levels.
struct IntTensor {
  std::vector<int> shape;
  std::vector<int32_t> data;

  IntTensor() = default;
  explicit IntTensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0);
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int32_t& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  int32_t operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
};

bool all_finite(const Tensor& t);

}  // namespace rpnet

#endif  // RPNET_TENSOR_HPP
