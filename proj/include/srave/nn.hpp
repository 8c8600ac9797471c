#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srave/tensor.hpp"

namespace srave {

inline constexpr float kLeakySlope = 0.2f;

/// 1-D convolution geometry.
///
/// Tap k multiplies the input k*dilation samples before the anchor. Causal
/// layers anchor output t at input t*stride + stride - 1 and look back
/// (kernel - 1) * dilation samples; non-causal layers centre the kernel.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  bool causal = true;

  std::size_t lookback() const { return (kernel - 1) * dilation; }
  std::size_t weight_count() const { return out_channels * in_channels * kernel; }
  std::vector<std::size_t> weight_shape() const { return {out_channels, in_channels, kernel}; }
  void validate() const;
};

/// Per-channel cache of the last lookback() input samples.
struct ConvState {
  Tensor cache;
};

/// Convolution layer with weights repacked per tap for GEMM.
/// Weight layout [out x in x kernel], bias [out] (may be empty).
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ConvSpec spec, const Tensor& weight, const Tensor& bias);

  const ConvSpec& spec() const { return spec_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  std::size_t param_count() const { return weight_.numel() + bias_.numel(); }

  Tensor forward(const Tensor& x) const;
  /// Cached-causal step. Concatenated outputs over any partition of the input
  /// equal forward() on the whole signal.
  Tensor forward(const Tensor& chunk, ConvState& state) const;
  ConvState initial_state() const;

 private:
  Tensor run(const Tensor& padded, std::size_t lead, std::size_t out_len) const;

  ConvSpec spec_;
  Tensor weight_;
  Tensor bias_;
  std::vector<float> packed_;  // [kernel][out][in]
};

/// Overlap tail carried between chunks: [out x max(0, kernel - stride)].
struct TransposedConvState {
  Tensor carry;
};

/// Upsampling transposed convolution: y[o, t*stride + k] += w[o, c, k] x[c, t].
/// The output keeps the first T*stride samples. Weight layout [out x in x kernel].
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(ConvSpec spec, const Tensor& weight, const Tensor& bias);

  const ConvSpec& spec() const { return spec_; }
  std::size_t param_count() const { return weight_.numel() + bias_.numel(); }

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& chunk, TransposedConvState& state) const;
  TransposedConvState initial_state() const;

 private:
  Tensor scatter(const Tensor& x, std::size_t& full_len) const;

  ConvSpec spec_;
  Tensor weight_;
  Tensor bias_;
  std::vector<float> packed_;  // [(out * kernel) x in]
};

/// 2-D non-causal convolution over [C x H x W] with centred padding.
struct Conv2dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;

  std::vector<std::size_t> weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Conv2dSpec spec, const Tensor& weight, const Tensor& bias);
  const Conv2dSpec& spec() const { return spec_; }
  std::size_t param_count() const { return weight_.numel() + bias_.numel(); }
  Tensor forward(const Tensor& x) const;

 private:
  Conv2dSpec spec_;
  Tensor weight_;
  Tensor bias_;
};

// Functional forms.
Tensor conv1d(const ConvSpec& spec, const Tensor& weight, const Tensor& bias, const Tensor& x);
Tensor conv1d_stream(const ConvSpec& spec, const Tensor& weight, const Tensor& bias,
                     ConvState& state, const Tensor& chunk);
Tensor transposed_conv1d(const ConvSpec& spec, const Tensor& weight, const Tensor& bias,
                         const Tensor& x);

Tensor leaky_relu(Tensor x, float slope = kLeakySlope);
void leaky_relu_inplace(Tensor& x, float slope = kLeakySlope);
void sigmoid_inplace(Tensor& x);

/// Inference-form batch normalization.
struct BatchNorm {
  std::vector<float> mean, var, gain, bias;
  float eps = 1e-5f;

  std::size_t channels() const { return mean.size(); }
  std::size_t param_count() const { return mean.size() * 4; }
  static BatchNorm identity(std::size_t channels, float eps = 1e-5f);
};

Tensor batchnorm_apply(const Tensor& x, std::span<const float> mean, std::span<const float> var,
                       std::span<const float> gain, std::span<const float> bias, float eps);
void batchnorm_inplace(Tensor& x, const BatchNorm& bn);

/// Per-channel scale (gamma) and offset (beta).
struct FiLMParams {
  std::vector<float> gamma;
  std::vector<float> beta;
};

Tensor film_apply(const Tensor& x, const FiLMParams& p);
void film_inplace(Tensor& x, const FiLMParams& p);

/// Dense layer y = W x + b with W [out x in].
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
  std::vector<float> apply(std::span<const float> x) const;
};

}  // namespace srave
