#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "srave/audio.hpp"

namespace srave {

/// Critically decimated sub-band signals, row-major [num_bands x frames].
struct BandMatrix {
  int num_bands = 0;
  std::size_t frames = 0;
  double band_rate = 0.0;
  std::vector<float> data;

  BandMatrix() = default;
  BandMatrix(int bands, std::size_t n_frames, double rate)
      : num_bands(bands), frames(n_frames), band_rate(rate),
        data(static_cast<std::size_t>(bands) * n_frames, 0.0f) {}

  std::span<float> band(int b) {
    return {data.data() + static_cast<std::size_t>(b) * frames, frames};
  }
  std::span<const float> band(int b) const {
    return {data.data() + static_cast<std::size_t>(b) * frames, frames};
  }
  float& at(int b, std::size_t t) { return data[static_cast<std::size_t>(b) * frames + t]; }
  float at(int b, std::size_t t) const { return data[static_cast<std::size_t>(b) * frames + t]; }
};

/// Cosine-modulated pseudo-QMF bank built from one linear-phase prototype.
///
/// Analysis band b uses h_b[n] = 2 p[n] cos((2b+1) pi/(2M) (n - (N-1)/2) + (-1)^b pi/4)
/// and synthesis the same with the phase term negated. Band frame m is taken at
/// input sample mM + M - 1, so a round trip delays the signal by N - M samples.
class PqmfBank {
 public:
  int num_bands() const { return num_bands_; }
  int taps() const { return static_cast<int>(prototype_.size()); }
  const std::vector<double>& prototype() const { return prototype_; }
  double cutoff() const { return cutoff_; }
  /// Worst relative off-centre Nyquist coefficient of the prototype.
  double nyquist_error() const { return nyquist_error_; }
  /// Round-trip delay in samples.
  int group_delay() const { return taps() - num_bands_; }

  /// Direct-form impulse responses, for inspection and testing.
  std::vector<double> analysis_filter(int band) const;
  std::vector<double> synthesis_filter(int band) const;

  friend PqmfBank design_bank(int num_bands, double attenuation_db, int taps);

 private:
  void build_tables();

  int num_bands_ = 1;
  double cutoff_ = 0.0;
  double nyquist_error_ = 0.0;
  std::vector<double> prototype_{1.0};
  // [M x 2M] modulation tables, one row per band, indexed by n mod 2M.
  std::vector<double> analysis_mod_;
  std::vector<double> synthesis_mod_;

  friend class PqmfAnalyzer;
  friend class PqmfSynthesizer;
};

/// Kaiser-window prototype with cutoff placed by golden-section search.
/// Throws InputError on bad arguments, ModelError if the achieved
/// reconstruction error exceeds -60 dB.
PqmfBank design_bank(int num_bands = 16, double attenuation_db = 100.0,
                     int taps = 512);

/// Streaming analysis state: the last N - M input samples.
class PqmfAnalyzer {
 public:
  explicit PqmfAnalyzer(const PqmfBank& bank);
  /// Chunk length must be a multiple of num_bands; empty chunks are no-ops.
  BandMatrix process(std::span<const float> chunk);
  void reset();

 private:
  const PqmfBank* bank_;
  std::vector<double> history_;
  std::vector<double> work_;
  std::vector<double> folded_;
};

/// Streaming synthesis state: modulated vectors of the last ceil(N/M) frames.
class PqmfSynthesizer {
 public:
  explicit PqmfSynthesizer(const PqmfBank& bank);
  std::vector<float> process(const BandMatrix& bands);
  void reset();

 private:
  const PqmfBank* bank_;
  std::size_t depth_;
  std::size_t head_ = 0;
  std::vector<double> ring_;  // [depth x 2M]
};

BandMatrix analyze(const PqmfBank& bank, const AudioBuffer& x);
/// Output is delayed by bank.group_delay() samples.
AudioBuffer synthesize(const PqmfBank& bank, const BandMatrix& bands,
                       int sample_rate = kEngineSampleRate);

/// Delay-compensated round-trip SNR in dB, ignoring `margin` samples at both
/// ends of the comparison window.
double round_trip_snr_db(const PqmfBank& bank, const AudioBuffer& x,
                         std::size_t margin);

}  // namespace srave
