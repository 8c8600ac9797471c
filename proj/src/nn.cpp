#include "srave/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "srave/error.hpp"

namespace srave {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

void check_bias(const Tensor& bias, std::size_t out) {
  if (!bias.data.empty() && bias.numel() != out) {
    throw InputError("bias has " + std::to_string(bias.numel()) + " values, expected " +
                     std::to_string(out));
  }
}

void check_input(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 2 || x.channels() != channels) {
    throw InputError(std::string(who) + ": expected [" + std::to_string(channels) +
                     " x T] input, got " + shape_string(x.shape));
  }
}

void add_bias(Tensor& y, const Tensor& bias) {
  if (bias.data.empty()) return;
  for (std::size_t o = 0; o < y.channels(); ++o) {
    const float b = bias.data[o];
    for (float& v : y.row(o)) v += b;
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (kernel < 1 || stride < 1 || dilation < 1 || in_channels < 1 || out_channels < 1) {
    throw InputError("conv spec: kernel, stride, dilation and channels must be >= 1");
  }
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(ConvSpec spec, const Tensor& weight, const Tensor& bias)
    : spec_(spec), weight_(weight), bias_(bias) {
  spec_.validate();
  if (weight.shape != spec_.weight_shape()) {
    throw InputError("conv weight shape " + shape_string(weight.shape) + ", expected " +
                     shape_string(spec_.weight_shape()));
  }
  check_bias(bias, spec_.out_channels);
  const std::size_t out = spec_.out_channels, in = spec_.in_channels, k = spec_.kernel;
  packed_.resize(weight.numel());
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t t = 0; t < k; ++t)
        packed_[(t * out + o) * in + c] = weight.data[(o * in + c) * k + t];
}

Tensor Conv1d::run(const Tensor& padded, std::size_t base, std::size_t out_len) const {
  const std::size_t in = spec_.in_channels, out = spec_.out_channels;
  const std::size_t tp = padded.length(), s = spec_.stride;
  Tensor y({out, out_len});
  if (out_len == 0) return y;
  MapMat ym(y.data.data(), ix(out), ix(out_len));
  RowMat gathered;
  for (std::size_t k = 0; k < spec_.kernel; ++k) {
    const std::size_t offset = base - k * spec_.dilation;
    ConstMapMat wk(packed_.data() + k * out * in, ix(out), ix(in));
    if (s == 1) {
      StridedMat xk(padded.data.data() + offset, ix(in), ix(out_len), Eigen::OuterStride<>(ix(tp)));
      ym.noalias() += wk * xk;
    } else {
      gathered.resize(ix(in), ix(out_len));
      for (std::size_t c = 0; c < in; ++c) {
        const float* src = padded.data.data() + c * tp + offset;
        for (std::size_t t = 0; t < out_len; ++t) gathered(ix(c), ix(t)) = src[t * s];
      }
      ym.noalias() += wk * gathered;
    }
  }
  add_bias(y, bias_);
  return y;
}

Tensor Conv1d::forward(const Tensor& x) const {
  check_input(x, spec_.in_channels, "conv1d");
  const std::size_t t = x.length(), s = spec_.stride, span = spec_.lookback();
  if (spec_.causal) {
    if (t % s != 0) {
      throw InputError("conv1d: length " + std::to_string(t) + " not divisible by stride " +
                       std::to_string(s));
    }
    ConvState state = initial_state();
    return forward(x, state);
  }
  // Centred: output t reads x[t*s + centre - k*d].
  const std::size_t centre = span / 2;
  const std::size_t out_len = (t + s - 1) / s;
  const std::size_t left = span - centre;
  const std::size_t base = left + centre;
  const std::size_t needed = base + (out_len ? (out_len - 1) * s + 1 : 0);
  Tensor padded({spec_.in_channels, std::max(needed, left + t)});
  for (std::size_t c = 0; c < spec_.in_channels; ++c) {
    std::copy(x.row(c).begin(), x.row(c).end(), padded.row(c).begin() + static_cast<std::ptrdiff_t>(left));
  }
  return run(padded, base, out_len);
}

ConvState Conv1d::initial_state() const {
  return ConvState{Tensor({spec_.in_channels, spec_.lookback()})};
}

Tensor Conv1d::forward(const Tensor& chunk, ConvState& state) const {
  if (!spec_.causal) throw InputError("conv1d_stream: layer is not causal");
  check_input(chunk, spec_.in_channels, "conv1d_stream");
  const std::size_t t = chunk.length(), s = spec_.stride, look = spec_.lookback();
  if (t % s != 0) {
    throw InputError("conv1d_stream: chunk of " + std::to_string(t) +
                     " frames not a multiple of stride " + std::to_string(s));
  }
  if (state.cache.shape != std::vector<std::size_t>{spec_.in_channels, look}) {
    throw InputError("conv1d_stream: state does not belong to this layer");
  }
  if (t == 0) return Tensor({spec_.out_channels, 0});

  Tensor padded({spec_.in_channels, look + t});
  for (std::size_t c = 0; c < spec_.in_channels; ++c) {
    auto dst = padded.row(c);
    std::copy(state.cache.row(c).begin(), state.cache.row(c).end(), dst.begin());
    std::copy(chunk.row(c).begin(), chunk.row(c).end(), dst.begin() + static_cast<std::ptrdiff_t>(look));
  }
  Tensor y = run(padded, look + s - 1, t / s);
  for (std::size_t c = 0; c < spec_.in_channels; ++c) {
    auto src = padded.row(c);
    std::copy(src.end() - static_cast<std::ptrdiff_t>(look), src.end(), state.cache.row(c).begin());
  }
  return y;
}

// ------------------------------------------------------- ConvTranspose1d

ConvTranspose1d::ConvTranspose1d(ConvSpec spec, const Tensor& weight, const Tensor& bias)
    : spec_(spec), weight_(weight), bias_(bias) {
  spec_.validate();
  if (weight.shape != spec_.weight_shape()) {
    throw InputError("transposed conv weight shape " + shape_string(weight.shape) +
                     ", expected " + shape_string(spec_.weight_shape()));
  }
  check_bias(bias, spec_.out_channels);
  const std::size_t out = spec_.out_channels, in = spec_.in_channels, k = spec_.kernel;
  packed_.resize(weight.numel());
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t t = 0; t < k; ++t)
        packed_[(o * k + t) * in + c] = weight.data[(o * in + c) * k + t];
}

TransposedConvState ConvTranspose1d::initial_state() const {
  const std::size_t carry = spec_.kernel > spec_.stride ? spec_.kernel - spec_.stride : 0;
  return TransposedConvState{Tensor({spec_.out_channels, carry})};
}

Tensor ConvTranspose1d::scatter(const Tensor& x, std::size_t& full_len) const {
  const std::size_t in = spec_.in_channels, out = spec_.out_channels;
  const std::size_t k = spec_.kernel, s = spec_.stride, t = x.length();
  full_len = std::max(t * s, (t - 1) * s + k);
  Tensor y({out, full_len});
  RowMat prod = ConstMapMat(packed_.data(), ix(out * k), ix(in)) *
                ConstMapMat(x.data.data(), ix(in), ix(t));
  for (std::size_t o = 0; o < out; ++o) {
    float* dst = y.row(o).data();
    for (std::size_t tap = 0; tap < k; ++tap) {
      const float* src = prod.data() + (o * k + tap) * t;
      for (std::size_t i = 0; i < t; ++i) dst[i * s + tap] += src[i];
    }
  }
  return y;
}

Tensor ConvTranspose1d::forward(const Tensor& x) const {
  TransposedConvState state = initial_state();
  return forward(x, state);
}

Tensor ConvTranspose1d::forward(const Tensor& chunk, TransposedConvState& state) const {
  check_input(chunk, spec_.in_channels, "transposed_conv1d");
  const std::size_t out = spec_.out_channels, s = spec_.stride, t = chunk.length();
  if (t == 0) return Tensor({out, 0});
  std::size_t full_len = 0;
  Tensor full = scatter(chunk, full_len);
  const std::size_t carry = state.carry.length();
  for (std::size_t o = 0; o < out; ++o) {
    auto dst = full.row(o);
    auto src = state.carry.row(o);
    for (std::size_t i = 0; i < carry; ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < carry; ++i) src[i] = dst[t * s + i];
  }
  Tensor y = slice_time(full, 0, t * s);
  add_bias(y, bias_);
  return y;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(Conv2dSpec spec, const Tensor& weight, const Tensor& bias)
    : spec_(spec), weight_(weight), bias_(bias) {
  if (weight.shape != spec_.weight_shape()) {
    throw InputError("conv2d weight shape " + shape_string(weight.shape) + ", expected " +
                     shape_string(spec_.weight_shape()));
  }
  check_bias(bias, spec_.out_channels);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != spec_.in_channels) {
    throw InputError("conv2d: expected [" + std::to_string(spec_.in_channels) +
                     " x H x W] input, got " + shape_string(x.shape));
  }
  const std::size_t c_in = spec_.in_channels, h = x.dim(1), w = x.dim(2);
  const std::size_t kh = spec_.kernel_h, kw = spec_.kernel_w;
  const std::size_t oh = (h + spec_.stride_h - 1) / spec_.stride_h;
  const std::size_t ow = (w + spec_.stride_w - 1) / spec_.stride_w;
  const auto ph = static_cast<std::ptrdiff_t>((kh - 1) / 2), pw = static_cast<std::ptrdiff_t>((kw - 1) / 2);

  RowMat cols = RowMat::Zero(ix(c_in * kh * kw), ix(oh * ow));
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) {
        const auto r = ix((c * kh + i) * kw + j);
        for (std::size_t y = 0; y < oh; ++y) {
          const auto src_y = static_cast<std::ptrdiff_t>(y * spec_.stride_h + i) - ph;
          if (src_y < 0 || src_y >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const auto src_x = static_cast<std::ptrdiff_t>(xo * spec_.stride_w + j) - pw;
            if (src_x < 0 || src_x >= static_cast<std::ptrdiff_t>(w)) continue;
            cols(r, ix(y * ow + xo)) =
                x.data[(c * h + static_cast<std::size_t>(src_y)) * w + static_cast<std::size_t>(src_x)];
          }
        }
      }
  Tensor out({spec_.out_channels, oh, ow});
  MapMat(out.data.data(), ix(spec_.out_channels), ix(oh * ow)).noalias() =
      ConstMapMat(weight_.data.data(), ix(spec_.out_channels), ix(c_in * kh * kw)) * cols;
  if (!bias_.data.empty()) {
    for (std::size_t o = 0; o < spec_.out_channels; ++o)
      for (std::size_t i = 0; i < oh * ow; ++i) out.data[o * oh * ow + i] += bias_.data[o];
  }
  return out;
}

// ------------------------------------------------------------ functional

Tensor conv1d(const ConvSpec& spec, const Tensor& weight, const Tensor& bias, const Tensor& x) {
  return Conv1d(spec, weight, bias).forward(x);
}

Tensor conv1d_stream(const ConvSpec& spec, const Tensor& weight, const Tensor& bias,
                     ConvState& state, const Tensor& chunk) {
  return Conv1d(spec, weight, bias).forward(chunk, state);
}

Tensor transposed_conv1d(const ConvSpec& spec, const Tensor& weight, const Tensor& bias,
                         const Tensor& x) {
  return ConvTranspose1d(spec, weight, bias).forward(x);
}

void leaky_relu_inplace(Tensor& x, float slope) {
  for (float& v : x.data) v = std::max(v, slope * v);
}

Tensor leaky_relu(Tensor x, float slope) {
  leaky_relu_inplace(x, slope);
  return x;
}

void sigmoid_inplace(Tensor& x) {
  for (float& v : x.data) v = 1.0f / (1.0f + std::exp(-v));
}

BatchNorm BatchNorm::identity(std::size_t channels, float eps) {
  return BatchNorm{std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f - eps),
                   std::vector<float>(channels, 1.0f), std::vector<float>(channels, 0.0f), eps};
}

void batchnorm_inplace(Tensor& x, const BatchNorm& bn) {
  if (x.rank() != 2 || x.channels() != bn.mean.size() || bn.var.size() != bn.mean.size() ||
      bn.gain.size() != bn.mean.size() || bn.bias.size() != bn.mean.size()) {
    throw InputError("batchnorm: statistics do not match " + shape_string(x.shape));
  }
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const float scale = bn.gain[c] / std::sqrt(bn.var[c] + bn.eps);
    const float mean = bn.mean[c], bias = bn.bias[c];
    for (float& v : x.row(c)) v = (v - mean) * scale + bias;
  }
}

Tensor batchnorm_apply(const Tensor& x, std::span<const float> mean, std::span<const float> var,
                       std::span<const float> gain, std::span<const float> bias, float eps) {
  BatchNorm bn{{mean.begin(), mean.end()}, {var.begin(), var.end()},
               {gain.begin(), gain.end()}, {bias.begin(), bias.end()}, eps};
  Tensor y = x;
  batchnorm_inplace(y, bn);
  return y;
}

void film_inplace(Tensor& x, const FiLMParams& p) {
  if (x.rank() != 2 || p.gamma.size() != x.channels() || p.beta.size() != x.channels()) {
    throw InputError("film: parameters for " + std::to_string(p.gamma.size()) +
                     " channels applied to " + shape_string(x.shape));
  }
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const float g = p.gamma[c], b = p.beta[c];
    for (float& v : x.row(c)) v = g * v + b;
  }
}

Tensor film_apply(const Tensor& x, const FiLMParams& p) {
  Tensor y = x;
  film_inplace(y, p);
  return y;
}

std::vector<float> Linear::apply(std::span<const float> x) const {
  if (weight.rank() != 2 || x.size() != in_features()) {
    throw InputError("linear: input of " + std::to_string(x.size()) + " features, layer expects " +
                     (weight.rank() == 2 ? std::to_string(in_features()) : std::string("?")));
  }
  std::vector<float> y(out_features());
  for (std::size_t o = 0; o < y.size(); ++o) {
    double acc = bias.data.empty() ? 0.0 : bias.data[o];
    const float* w = weight.data.data() + o * x.size();
    for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(w[i]) * x[i];
    y[o] = static_cast<float>(acc);
  }
  return y;
}

}  // namespace srave
