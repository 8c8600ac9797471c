#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "srave/audio.hpp"
#include "srave/model.hpp"

namespace srave::testing {

// Narrow widths so the graph runs in milliseconds; geometry matches the default.
inline ModelConfig small_config() {
  ModelConfig c;
  c.latent_dim = 8;
  c.num_classes = 10;
  c.speaker_dim = 16;
  c.encoder_channels = {8, 12, 16, 16};
  c.decoder_channels = {16, 12, 8, 8};
  c.residual_units = 2;
  return c;
}

// Parameter count by hand: conv o*i*k + o, BatchNorm 4C, FiLM linear 2C*D + 2C.
inline std::size_t hand_count(const ModelConfig& c) {
  auto conv = [](std::size_t o, std::size_t i, std::size_t k) { return o * i * k + o; };
  const auto& e = c.encoder_channels;
  const auto& d = c.decoder_channels;
  std::size_t n = conv(e[0], static_cast<std::size_t>(c.content_bands), c.io_kernel);
  for (std::size_t s = 0; s + 1 < e.size(); ++s) {
    n += 4 * e[s] + conv(e[s], e[s], c.inner_kernel) + 4 * e[s] + conv(e[s + 1], e[s], 2 * c.encoder_strides[s]);
  }
  n += 4 * e.back() + conv(c.latent_dim, e.back(), c.inner_kernel);
  n += conv(d[0], c.latent_dim, c.inner_kernel);
  for (std::size_t s = 0; s + 1 < d.size(); ++s) {
    n += conv(d[s + 1], d[s], 2 * c.decoder_strides[s]);
    const std::size_t ch = d[s + 1];
    n += c.residual_units * (conv(ch, ch, c.inner_kernel) + conv(ch, ch, 1) + 2 * ch * c.speaker_dim + 2 * ch);
  }
  n += 2 * conv(static_cast<std::size_t>(c.num_bands), d.back(), c.io_kernel);
  return n;
}

inline bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

// Every additive offset set to zero: conv biases, BN mean/bias, and the whole
// FiLM beta path (bias and weight rows) since beta adds a speaker-only offset.
inline Model zero_bias(const Model& m) {
  WeightContainer w = m.weights();
  for (auto [name, t] : w.entries()) {
    if (ends_with(name, ".bias") || ends_with(name, ".mean")) {
      std::fill(t.data.begin(), t.data.end(), 0.0f);
      w.set(name, t);
    } else if (ends_with(name, ".film.weight")) {
      std::fill(t.data.begin() + static_cast<std::ptrdiff_t>(t.numel() / 2), t.data.end(), 0.0f);
      w.set(name, t);
    }
  }
  return Model(m.config(), w);
}

// One band, unit widths, one stride-1 stage: every layer passes its input through.
inline Model identity_model(std::size_t residual_units = 2) {
  ModelConfig c;
  c.num_bands = 1;
  c.content_bands = 1;
  c.latent_dim = 1;
  c.num_classes = 2;
  c.speaker_dim = 4;
  c.encoder_channels = {1, 1};
  c.encoder_strides = {1};
  c.decoder_channels = {1, 1};
  c.decoder_strides = {1};
  c.residual_units = residual_units;
  c.leaky_slope = 1.0f;
  c.bn_eps = 0.0f;
  WeightContainer w = Model::random(c, 1).weights();
  for (auto [name, t] : w.entries()) {
    std::fill(t.data.begin(), t.data.end(), 0.0f);
    const bool pointwise = name.find(".pointwise.") != std::string::npos;
    if (ends_with(name, ".weight") && t.rank() == 3 && !pointwise && name != "dec.amp.weight") {
      t.data[0] = 1.0f;  // tap 0: current sample
    }
    if (ends_with(name, ".var") || ends_with(name, ".gain")) t.data.assign(t.numel(), 1.0f);
    if (ends_with(name, ".film.bias")) t.data[0] = 1.0f;
    if (name == "dec.amp.bias") t.data[0] = 100.0f;
    w.set(name, t);
  }
  return Model(c, w);
}

inline AudioBuffer noise_buffer(std::size_t len, std::uint64_t seed, double stddev = 0.1) {
  return gen_noise(len, seed, stddev, kEngineSampleRate);
}

// Direct DTFT magnitude of the Hann-windowed middle half, no FFT library.
inline double dtft_mag(const std::vector<float>& x, double f) {
  const std::size_t a = x.size() / 4, n = x.size() / 2;
  std::complex<double> acc = 0.0;
  const double w = 2.0 * std::numbers::pi * f / kEngineSampleRate;
  for (std::size_t i = 0; i < n; ++i) {
    const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    acc += win * static_cast<double>(x[a + i]) * std::polar(1.0, -w * static_cast<double>(i));
  }
  return std::abs(acc);
}

// Coarse scan then golden-section refinement of the spectral peak in [lo, hi].
inline double peak_frequency(const std::vector<float>& x, double lo, double hi) {
  double best = lo, best_mag = -1.0;
  for (double f = lo; f <= hi; f += 2.0) {
    const double m = dtft_mag(x, f);
    if (m > best_mag) best_mag = m, best = f;
  }
  double a = best - 2.0, b = best + 2.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 40; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (dtft_mag(x, c) > dtft_mag(x, d)) b = d; else a = c;
  }
  return 0.5 * (a + b);
}

}  // namespace srave::testing
