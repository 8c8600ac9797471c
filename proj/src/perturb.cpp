#include "srave/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "srave/error.hpp"
#include "srave/fft.hpp"

namespace srave {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kFrame = 2048;
constexpr std::size_t kHop = 512;
constexpr double kRatioSlack = 1e-9;

void check_ratio(double r, double lo, double hi, const char* what) {
  if (!std::isfinite(r) || r < lo - kRatioSlack || r > hi + kRatioSlack) {
    throw InputError(std::string(what) + " ratio " + std::to_string(r) + " outside [" + std::to_string(lo) +
                     ", " + std::to_string(hi) + "]");
  }
}

double wrap_phase(double p) { return p - 2.0 * kPi * std::round(p / (2.0 * kPi)); }

// Weighted overlap-add accumulator with squared-window normalization.
struct Ola {
  std::vector<double> acc, weight;

  explicit Ola(std::size_t n) : acc(n, 0.0), weight(n, 0.0) {}

  void add(std::size_t at, std::span<const double> frame, const std::vector<double>& w) {
    for (std::size_t i = 0; i < frame.size() && at + i < acc.size(); ++i) {
      acc[at + i] += frame[i] * w[i];
      weight[at + i] += w[i] * w[i];
    }
  }

  double at(std::size_t i) const { return weight[i] > 1e-6 ? acc[i] / weight[i] : 0.0; }
};

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// Band-limited read of y at fractional positions start + n * step, n < count.
std::vector<double> resample(const std::vector<double>& y, double start, double step, std::size_t count) {
  constexpr double kZeroCrossings = 16.0;
  constexpr double kBeta = 8.0;
  const double cutoff = std::min(1.0, 1.0 / step);
  const double half = kZeroCrossings / cutoff;
  const double norm = bessel_i0(kBeta);
  std::vector<double> out(count, 0.0);
  const auto len = static_cast<std::ptrdiff_t>(y.size());
  for (std::size_t n = 0; n < count; ++n) {
    const double t = start + static_cast<double>(n) * step;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half));
    double acc = 0.0;
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(lo, 0); k <= std::min(hi, len - 1); ++k) {
      const double u = t - static_cast<double>(k);
      const double r = u / half;
      const double win = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
      const double arg = kPi * cutoff * u;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      acc += y[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    out[n] = acc;
  }
  return out;
}

AudioBuffer to_buffer(const std::vector<double>& v, int rate) {
  AudioBuffer out{rate, std::vector<float>(v.size())};
  std::transform(v.begin(), v.end(), out.samples.begin(), [](double s) { return static_cast<float>(s); });
  return out;
}

// x embedded after `lead` zeros and followed by `tail` zeros.
std::vector<double> padded(const AudioBuffer& x, std::size_t lead, std::size_t tail) {
  std::vector<double> p(lead + x.samples.size() + tail, 0.0);
  std::copy(x.samples.begin(), x.samples.end(), p.begin() + static_cast<std::ptrdiff_t>(lead));
  return p;
}

// Smooth upper envelope of a log-magnitude spectrum: iterated cepstral
// smoothing that keeps raising the target to the running envelope.
void true_envelope(const std::vector<double>& logmag, std::size_t lifter, RealFft& fft,
                   std::vector<double>& env) {
  constexpr int kMaxIterations = 60;
  constexpr double kTolerance = 0.05;  // nats
  const std::size_t n = fft.size();
  std::vector<double> target = logmag, cep(n);
  std::vector<std::complex<double>> spec(fft.bins());
  env.assign(fft.bins(), 0.0);
  for (int it = 0; it < kMaxIterations; ++it) {
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = target[k];
    fft.inverse(spec, cep);
    for (std::size_t q = lifter + 1; q + lifter < n; ++q) cep[q] = 0.0;
    for (double& c : cep) c /= static_cast<double>(n);
    fft.forward(cep, spec);
    double worst = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      env[k] = spec[k].real();
      worst = std::max(worst, logmag[k] - env[k]);
      target[k] = std::max(target[k], env[k]);
    }
    if (worst < kTolerance) break;
  }
}

}  // namespace

Biquad Biquad::design(const PeqSection& s, int sample_rate) {
  if (sample_rate <= 0) throw InputError("peq: sample rate must be positive");
  const double nyquist = 0.5 * sample_rate;
  if (!(s.freq_hz > 0.0 && s.freq_hz < nyquist)) {
    throw InputError("peq: frequency " + std::to_string(s.freq_hz) + " Hz outside (0, Nyquist)");
  }
  if (!(s.q > 0.0) || !std::isfinite(s.q)) throw InputError("peq: Q must be positive");
  if (!std::isfinite(s.gain_db)) throw InputError("peq: gain must be finite");

  const double a = std::pow(10.0, s.gain_db / 40.0);
  const double w0 = 2.0 * kPi * s.freq_hz / sample_rate;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * s.q);
  double b0, b1, b2, a0, a1, a2;
  switch (s.type) {
    case BiquadType::Peaking:
      b0 = 1.0 + alpha * a;
      b1 = -2.0 * cw;
      b2 = 1.0 - alpha * a;
      a0 = 1.0 + alpha / a;
      a1 = -2.0 * cw;
      a2 = 1.0 - alpha / a;
      break;
    case BiquadType::LowShelf: {
      const double sq = 2.0 * std::sqrt(a) * alpha;
      b0 = a * ((a + 1) - (a - 1) * cw + sq);
      b1 = 2 * a * ((a - 1) - (a + 1) * cw);
      b2 = a * ((a + 1) - (a - 1) * cw - sq);
      a0 = (a + 1) + (a - 1) * cw + sq;
      a1 = -2 * ((a - 1) + (a + 1) * cw);
      a2 = (a + 1) + (a - 1) * cw - sq;
      break;
    }
    case BiquadType::HighShelf: {
      const double sq = 2.0 * std::sqrt(a) * alpha;
      b0 = a * ((a + 1) + (a - 1) * cw + sq);
      b1 = -2 * a * ((a - 1) + (a + 1) * cw);
      b2 = a * ((a + 1) + (a - 1) * cw - sq);
      a0 = (a + 1) - (a - 1) * cw + sq;
      a1 = 2 * ((a - 1) - (a + 1) * cw);
      a2 = (a + 1) - (a - 1) * cw - sq;
      break;
    }
    default:
      throw InputError("peq: unknown section type");
  }
  Biquad q{b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
  if (!q.stable()) throw InputError("peq: section has poles on or outside the unit circle");
  return q;
}

bool Biquad::stable() const {
  // Jury conditions for z^2 + a1 z + a2.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

PerturbParams sample_params(Prng& rng) {
  PerturbParams p;
  const double r = rng.uniform(1.0, 2.0);
  p.pitch_ratio = rng.uniform() < 0.5 ? 1.0 / r : r;
  const double f = rng.uniform(1.0, kFormantRatioMax);
  p.formant_ratio = rng.uniform() < 0.5 ? 1.0 / f : f;
  p.peq.reserve(kPeqSections);
  for (std::size_t i = 0; i < kPeqSections; ++i) {
    PeqSection s;
    if (i == 0) {
      s.type = BiquadType::LowShelf;
      s.freq_hz = kPeqLowHz;
    } else if (i + 1 == kPeqSections) {
      s.type = BiquadType::HighShelf;
      s.freq_hz = kPeqHighHz;
    } else {
      s.type = BiquadType::Peaking;
      s.freq_hz = kPeqLowHz * std::pow(kPeqHighHz / kPeqLowHz, rng.uniform());
    }
    s.gain_db = rng.uniform(-12.0, 12.0);
    s.q = rng.uniform(2.0, 5.0);
    p.peq.push_back(s);
  }
  return p;
}

AudioBuffer apply_peq(const AudioBuffer& x, const std::vector<PeqSection>& sections) {
  require_engine_rate(x);
  std::vector<Biquad> filters;
  filters.reserve(sections.size());
  for (const auto& s : sections) filters.push_back(Biquad::design(s, x.sample_rate));

  std::vector<double> y(x.samples.begin(), x.samples.end());
  for (const auto& f : filters) {
    double z1 = 0.0, z2 = 0.0;  // transposed direct form II
    for (double& v : y) {
      const double in = v;
      const double out = f.b0 * in + z1;
      z1 = f.b1 * in - f.a1 * out + z2;
      z2 = f.b2 * in - f.a2 * out;
      v = out;
    }
  }
  return to_buffer(y, x.sample_rate);
}

AudioBuffer apply_pitch_shift(const AudioBuffer& x, double ratio) {
  check_ratio(ratio, kPitchRatioMin, kPitchRatioMax, "pitch");
  const std::size_t len = x.samples.size();
  if (len == 0) return x;

  const auto analysis_hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(kHop / ratio)));
  const double stretch = static_cast<double>(kHop) / static_cast<double>(analysis_hop);
  const std::size_t lead = 2 * kFrame;
  const std::vector<double> in = padded(x, lead, 2 * kFrame);
  const std::size_t frames = (in.size() - kFrame) / analysis_hop + 1;

  RealFft fft(kFrame);
  const auto window = hann_window(kFrame);
  const std::size_t bins = fft.bins();
  std::vector<double> frame(kFrame), mag(bins), phase(bins), prev_phase(bins, 0.0), out_phase(bins, 0.0),
      advanced(bins);
  std::vector<std::size_t> peaks;
  std::vector<std::complex<double>> spec(bins);
  Ola ola((frames - 1) * kHop + kFrame);

  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t i = 0; i < kFrame; ++i) frame[i] = in[m * analysis_hop + i] * window[i];
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < bins; ++k) {
      mag[k] = std::abs(spec[k]);
      phase[k] = std::arg(spec[k]);
    }
    if (m == 0) {
      out_phase = phase;
    } else {
      for (std::size_t k = 0; k < bins; ++k) {
        const double omega = 2.0 * kPi * static_cast<double>(k) / kFrame;
        const double dev = wrap_phase(phase[k] - prev_phase[k] - omega * analysis_hop);
        advanced[k] = out_phase[k] + (omega + dev / analysis_hop) * kHop;
      }
      // Identity phase locking: each bin keeps its analysis phase offset from
      // the nearest magnitude peak, which is advanced on its own.
      peaks.clear();
      for (std::size_t k = 1; k + 1 < bins; ++k) {
        if (mag[k] > mag[k - 1] && mag[k] >= mag[k + 1]) peaks.push_back(k);
      }
      if (peaks.empty()) {
        out_phase = advanced;
      } else {
        std::size_t p = 0;
        for (std::size_t k = 0; k < bins; ++k) {
          while (p + 1 < peaks.size() && 2 * k > peaks[p] + peaks[p + 1]) ++p;
          out_phase[k] = wrap_phase(advanced[peaks[p]] + phase[k] - phase[peaks[p]]);
        }
      }
    }
    prev_phase = phase;
    for (std::size_t k = 0; k < bins; ++k) spec[k] = std::polar(mag[k], out_phase[k]);
    fft.inverse(spec, frame);
    for (double& v : frame) v /= static_cast<double>(kFrame);
    ola.add(m * kHop, frame, window);
  }

  std::vector<double> stretched(ola.acc.size());
  for (std::size_t i = 0; i < stretched.size(); ++i) stretched[i] = ola.at(i);
  // Reading the stretched signal `ratio` times faster restores the duration
  // and scales every frequency by `ratio`.
  const double start = static_cast<double>(lead) * stretch;
  if (ratio == 1.0 && stretch == 1.0) {
    std::vector<double> out(stretched.begin() + static_cast<std::ptrdiff_t>(lead),
                            stretched.begin() + static_cast<std::ptrdiff_t>(lead + len));
    return to_buffer(out, x.sample_rate);
  }
  return to_buffer(resample(stretched, start, ratio, len), x.sample_rate);
}

AudioBuffer apply_formant_shift(const AudioBuffer& x, double ratio, double lifter_ms) {
  check_ratio(ratio, 1.0 / kFormantRatioMax, kFormantRatioMax, "formant");
  if (x.sample_rate <= 0) throw InputError("formant: sample rate must be positive");
  const auto lifter = static_cast<std::size_t>(std::lround(lifter_ms * 1e-3 * x.sample_rate));
  if (!(lifter_ms > 0.0) || lifter == 0 || 2 * lifter >= kFrame) throw InputError("formant: lifter out of range");
  const std::size_t len = x.samples.size();
  if (len == 0) return x;

  const std::size_t lead = kFrame;
  const std::vector<double> in = padded(x, lead, kFrame + kHop);
  const std::size_t frames = (in.size() - kFrame) / kHop + 1;

  RealFft fft(kFrame);
  const auto window = hann_window(kFrame);
  const std::size_t bins = fft.bins();
  std::vector<double> frame(kFrame), logmag(bins), env;
  std::vector<std::complex<double>> spec(bins);
  Ola ola((frames - 1) * kHop + kFrame);

  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t i = 0; i < kFrame; ++i) frame[i] = in[m * kHop + i] * window[i];
    fft.forward(frame, spec);
    if (ratio != 1.0) {
      for (std::size_t k = 0; k < bins; ++k) logmag[k] = std::log(std::max(std::abs(spec[k]), 1e-9));
      true_envelope(logmag, lifter, fft, env);
      for (std::size_t k = 0; k < bins; ++k) {
        const double src = std::min(static_cast<double>(k) / ratio, static_cast<double>(bins - 1));
        const auto k0 = static_cast<std::size_t>(src);
        const std::size_t k1 = std::min(k0 + 1, bins - 1);
        const double frac = src - static_cast<double>(k0);
        const double warped = (1.0 - frac) * env[k0] + frac * env[k1];
        spec[k] *= std::exp(warped - env[k]);
      }
    }
    fft.inverse(spec, frame);
    for (double& v : frame) v /= static_cast<double>(kFrame);
    ola.add(m * kHop, frame, window);
  }

  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = ola.at(lead + i);
  return to_buffer(out, x.sample_rate);
}

AudioBuffer perturb(const AudioBuffer& x, const PerturbParams& p) {
  require_engine_rate(x);
  AudioBuffer y = apply_formant_shift(apply_pitch_shift(apply_peq(x, p.peq), p.pitch_ratio), p.formant_ratio);
  const float limit = 4.0f * peak(x.samples);
  const float got = peak(y.samples);
  if (got > limit) {
    const float g = got > 0.0f ? limit / got : 0.0f;
    for (float& v : y.samples) v *= g;
  }
  return y;
}

}  // namespace srave
