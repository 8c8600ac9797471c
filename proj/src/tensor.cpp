#include "srave/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "srave/error.hpp"

namespace srave {

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> values)
    : shape(std::move(dims)), data(std::move(values)) {
  if (data.size() != count(shape)) {
    throw InputError("tensor payload of " + std::to_string(data.size()) +
                     " values does not match shape " + shape_string(shape));
  }
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor concat_time(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const std::size_t channels = parts.front().channels();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.channels() != channels) throw InputError("concat_time: channel mismatch");
    total += p.length();
  }
  Tensor out({channels, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy(p.row(c).begin(), p.row(c).end(), out.row(c).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += p.length();
  }
  return out;
}

Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.length()) throw InputError("slice_time: range out of bounds");
  Tensor out({x.channels(), count});
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto src = x.row(c).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(c).begin());
  }
  return out;
}

bool all_finite(const Tensor& x) {
  return std::all_of(x.data.begin(), x.data.end(), [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw InputError("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace srave
