#include "srave/pqmf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "srave/error.hpp"

namespace srave {

namespace {

constexpr double kPi = std::numbers::pi;
// Largest tolerated off-centre Nyquist coefficient (-60 dB).
constexpr double kMaxNyquistError = 1e-3;

double kaiser_beta(double attenuation_db) {
  if (attenuation_db > 50.0) return 0.1102 * (attenuation_db - 8.7);
  if (attenuation_db >= 21.0) {
    return 0.5842 * std::pow(attenuation_db - 21.0, 0.4) +
           0.07886 * (attenuation_db - 21.0);
  }
  return 0.0;
}

std::vector<double> kaiser_lowpass(int taps, double cutoff, double beta) {
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double centre = (taps - 1) / 2.0;
  const double norm = std::cyl_bessel_i(0.0, beta);
  for (int n = 0; n < taps; ++n) {
    const double t = n - centre;
    const double sinc = t == 0.0 ? cutoff / kPi : std::sin(cutoff * t) / (kPi * t);
    const double r = taps > 1 ? 2.0 * n / (taps - 1) - 1.0 : 0.0;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    h[static_cast<std::size_t>(n)] = sinc * w;
  }
  return h;
}

// Worst |g[c + 2Mk]| / g[c] for k != 0, where g = p * p and c = N - 1. The
// cascade of analysis and synthesis prototypes must be a 2M-th band Nyquist
// filter for the distortion function to be flat.
double nyquist_error(const std::vector<double>& p, int bands) {
  const int n = static_cast<int>(p.size());
  const int centre = n - 1;
  auto autocorr = [&](int lag) {
    double acc = 0.0;
    for (int i = lag; i < n; ++i) acc += p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i - lag)];
    return acc;
  };
  const double g0 = autocorr(0);
  double worst = 0.0;
  for (int lag = 2 * bands; lag <= centre; lag += 2 * bands) {
    worst = std::max(worst, std::fabs(autocorr(lag)) / g0);
  }
  return worst;
}

}  // namespace

PqmfBank design_bank(int num_bands, double attenuation_db, int taps) {
  if (num_bands < 1 || (num_bands & (num_bands - 1)) != 0) {
    throw InputError("design_bank: num_bands must be a power of two");
  }
  PqmfBank bank;
  bank.num_bands_ = num_bands;
  if (num_bands == 1) {
    bank.prototype_ = {1.0};
    bank.cutoff_ = kPi;
    bank.build_tables();
    return bank;
  }
  if (taps <= num_bands || taps % num_bands != 0) {
    throw InputError("design_bank: taps must be a multiple of num_bands greater than it");
  }
  if (!(attenuation_db > 0.0)) throw InputError("design_bank: attenuation must be positive");

  const double beta = kaiser_beta(attenuation_db);
  const double nominal = kPi / (2.0 * num_bands);
  auto cost = [&](double wc) {
    return nyquist_error(kaiser_lowpass(taps, wc, beta), num_bands);
  };

  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.75 * nominal, hi = 1.25 * nominal;
  double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
  double f1 = cost(x1), f2 = cost(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - golden * (hi - lo); f1 = cost(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + golden * (hi - lo); f2 = cost(x2);
    }
  }
  bank.cutoff_ = 0.5 * (lo + hi);
  bank.prototype_ = kaiser_lowpass(taps, bank.cutoff_, beta);
  bank.nyquist_error_ = nyquist_error(bank.prototype_, num_bands);
  if (bank.nyquist_error_ > kMaxNyquistError) {
    throw ModelError("design_bank: infeasible design (" + std::to_string(taps) +
                     " taps, " + std::to_string(attenuation_db) +
                     " dB): reconstruction error " +
                     std::to_string(20.0 * std::log10(bank.nyquist_error_)) + " dB");
  }
  bank.build_tables();
  return bank;
}

void PqmfBank::build_tables() {
  const int m = num_bands_;
  const double centre = (taps() - 1) / 2.0;
  analysis_mod_.assign(static_cast<std::size_t>(m) * 2 * m, 0.0);
  synthesis_mod_.assign(analysis_mod_.size(), 0.0);
  for (int b = 0; b < m; ++b) {
    const double phase = (b % 2 == 0 ? 1.0 : -1.0) * kPi / 4.0;
    for (int r = 0; r < 2 * m; ++r) {
      const double theta = (2 * b + 1) * kPi / (2.0 * m) * (r - centre);
      const auto idx = static_cast<std::size_t>(b) * 2 * m + static_cast<std::size_t>(r);
      analysis_mod_[idx] = 2.0 * std::cos(theta + phase);
      synthesis_mod_[idx] = 2.0 * std::cos(theta - phase);
    }
  }

  // Scale the prototype so the distortion function has unit gain at its peak:
  // sum_b (h_b * g_b)[N-1] = M.
  double peak = 0.0;
  for (int b = 0; b < m; ++b) {
    const auto h = analysis_filter(b);
    const auto g = synthesis_filter(b);
    for (std::size_t n = 0; n < h.size(); ++n) peak += h[n] * g[h.size() - 1 - n];
  }
  const double scale = std::sqrt(m / peak);
  for (auto& v : prototype_) v *= scale;
}

std::vector<double> PqmfBank::analysis_filter(int band) const {
  const auto m = static_cast<std::size_t>(num_bands_);
  std::vector<double> h(prototype_.size());
  for (std::size_t n = 0; n < h.size(); ++n) {
    const double sign = ((n / (2 * m)) % 2 == 0) ? 1.0 : -1.0;
    h[n] = sign * prototype_[n] * analysis_mod_[static_cast<std::size_t>(band) * 2 * m + n % (2 * m)];
  }
  return h;
}

std::vector<double> PqmfBank::synthesis_filter(int band) const {
  const auto m = static_cast<std::size_t>(num_bands_);
  std::vector<double> g(prototype_.size());
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double sign = ((n / (2 * m)) % 2 == 0) ? 1.0 : -1.0;
    g[n] = sign * prototype_[n] * synthesis_mod_[static_cast<std::size_t>(band) * 2 * m + n % (2 * m)];
  }
  return g;
}

PqmfAnalyzer::PqmfAnalyzer(const PqmfBank& bank)
    : bank_(&bank),
      history_(static_cast<std::size_t>(bank.taps() - bank.num_bands()), 0.0),
      folded_(static_cast<std::size_t>(2 * bank.num_bands()), 0.0) {}

void PqmfAnalyzer::reset() { std::fill(history_.begin(), history_.end(), 0.0); }

BandMatrix PqmfAnalyzer::process(std::span<const float> chunk) {
  const int m = bank_->num_bands();
  const auto um = static_cast<std::size_t>(m);
  if (chunk.size() % um != 0) {
    throw InputError("pqmf analysis: chunk of " + std::to_string(chunk.size()) +
                     " samples is not a multiple of " + std::to_string(m));
  }
  const std::size_t frames = chunk.size() / um;
  BandMatrix out(m, frames, 0.0);
  if (frames == 0) return out;

  const auto& p = bank_->prototype_;
  const std::size_t taps = p.size();
  const std::size_t hist = history_.size();
  work_.resize(hist + chunk.size());
  std::copy(history_.begin(), history_.end(), work_.begin());
  std::copy(chunk.begin(), chunk.end(), work_.begin() + static_cast<std::ptrdiff_t>(hist));

  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t anchor = hist + f * um + um - 1;
    for (std::size_t r = 0; r < 2 * um; ++r) {
      double acc = 0.0;
      double sign = 1.0;
      for (std::size_t n = r; n < taps; n += 2 * um) {
        acc += sign * p[n] * work_[anchor - n];
        sign = -sign;
      }
      folded_[r] = acc;
    }
    for (int b = 0; b < m; ++b) {
      const double* mod = bank_->analysis_mod_.data() + static_cast<std::size_t>(b) * 2 * um;
      double acc = 0.0;
      for (std::size_t r = 0; r < 2 * um; ++r) acc += mod[r] * folded_[r];
      out.at(b, f) = static_cast<float>(acc);
    }
  }
  std::copy(work_.end() - static_cast<std::ptrdiff_t>(hist), work_.end(), history_.begin());
  return out;
}

PqmfSynthesizer::PqmfSynthesizer(const PqmfBank& bank)
    : bank_(&bank),
      depth_(static_cast<std::size_t>((bank.taps() + bank.num_bands() - 1) / bank.num_bands())),
      ring_(depth_ * 2 * static_cast<std::size_t>(bank.num_bands()), 0.0) {}

void PqmfSynthesizer::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  head_ = 0;
}

std::vector<float> PqmfSynthesizer::process(const BandMatrix& bands) {
  const int m = bank_->num_bands();
  if (bands.num_bands != m) {
    throw InputError("pqmf synthesis: expected " + std::to_string(m) + " bands, got " +
                     std::to_string(bands.num_bands));
  }
  const auto um = static_cast<std::size_t>(m);
  const auto& p = bank_->prototype_;
  const std::size_t taps = p.size();
  std::vector<float> out(bands.frames * um);

  for (std::size_t f = 0; f < bands.frames; ++f) {
    head_ = (head_ + 1) % depth_;
    double* slot = ring_.data() + head_ * 2 * um;
    for (std::size_t r = 0; r < 2 * um; ++r) {
      double acc = 0.0;
      for (int b = 0; b < m; ++b) {
        acc += bank_->synthesis_mod_[static_cast<std::size_t>(b) * 2 * um + r] * bands.at(b, f);
      }
      slot[r] = acc;
    }
    for (std::size_t j = 0; j < um; ++j) {
      double acc = 0.0;
      std::size_t k = 0;
      for (std::size_t n = j; n < taps; n += um, ++k) {
        const double* past = ring_.data() + ((head_ + depth_ - k) % depth_) * 2 * um;
        const double sign = ((n / (2 * um)) % 2 == 0) ? 1.0 : -1.0;
        acc += sign * p[n] * past[n % (2 * um)];
      }
      out[f * um + j] = static_cast<float>(acc);
    }
  }
  return out;
}

BandMatrix analyze(const PqmfBank& bank, const AudioBuffer& x) {
  PqmfAnalyzer analyzer(bank);
  BandMatrix out = analyzer.process(x.samples);
  out.band_rate = static_cast<double>(x.sample_rate) / bank.num_bands();
  return out;
}

AudioBuffer synthesize(const PqmfBank& bank, const BandMatrix& bands,
                       int sample_rate) {
  PqmfSynthesizer synth(bank);
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples = synth.process(bands);
  return out;
}

double round_trip_snr_db(const PqmfBank& bank, const AudioBuffer& x,
                         std::size_t margin) {
  const auto y = synthesize(bank, analyze(bank, x), x.sample_rate);
  const auto delay = static_cast<std::size_t>(bank.group_delay());
  if (x.size() <= delay + 2 * margin) throw InputError("round_trip_snr_db: signal too short");
  double sig = 0.0, err = 0.0;
  for (std::size_t n = margin; n + delay + margin < x.size(); ++n) {
    const double ref = x.samples[n];
    const double d = y.samples[n + delay] - ref;
    sig += ref * ref;
    err += d * d;
  }
  if (err == 0.0) return 300.0;
  return 10.0 * std::log10(sig / err);
}

}  // namespace srave
