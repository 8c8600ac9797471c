#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace srave {

/// Dense row-major float32 array.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f)
      : shape(std::move(dims)), data(count(shape), fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<float> values);

  static std::size_t count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  // 2-D helpers for [channels x time] activations.
  std::size_t channels() const { return shape.at(0); }
  std::size_t length() const { return shape.at(1); }
  std::span<float> row(std::size_t c) { return {data.data() + c * shape.at(1), shape.at(1)}; }
  std::span<const float> row(std::size_t c) const { return {data.data() + c * shape.at(1), shape.at(1)}; }
  float& at(std::size_t c, std::size_t t) { return data[c * shape[1] + t]; }
  float at(std::size_t c, std::size_t t) const { return data[c * shape[1] + t]; }

  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Concatenate [C x T_i] tensors along time.
Tensor concat_time(std::span<const Tensor> parts);
/// Columns [begin, begin + count) of a [C x T] tensor.
Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t count);

bool all_finite(const Tensor& x);
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace srave
