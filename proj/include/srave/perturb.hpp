#pragma once

#include <vector>

#include "srave/audio.hpp"

namespace srave {

enum class BiquadType { LowShelf, Peaking, HighShelf };

struct PeqSection {
  BiquadType type = BiquadType::Peaking;
  double freq_hz = 1000.0;
  double q = 2.0;
  double gain_db = 0.0;
};

/// Normalized biquad, a0 = 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

  /// Audio-EQ-cookbook coefficients. Throws InputError on a section that is
  /// out of range or whose poles are not strictly inside the unit circle.
  static Biquad design(const PeqSection& s, int sample_rate);
  bool stable() const;
};

struct PerturbParams {
  std::vector<PeqSection> peq;
  double pitch_ratio = 1.0;
  double formant_ratio = 1.0;
};

inline constexpr double kPitchRatioMin = 0.5;
inline constexpr double kPitchRatioMax = 2.0;
inline constexpr double kFormantRatioMax = 1.4;
inline constexpr std::size_t kPeqSections = 10;
inline constexpr double kPeqLowHz = 60.0;
inline constexpr double kPeqHighHz = 10000.0;

/// Envelope lifter cutoff for formant shifting.
inline constexpr double kFormantLifterMs = 4.5;

/// Random draw: low shelf at 60 Hz, eight peaking sections with log-uniform
/// centres in [60 Hz, 10 kHz], high shelf at 10 kHz; gains U(-12, 12) dB,
/// Q U(2, 5); pitch r^s with r ~ U(1, 2), formant f^s with f ~ U(1, 1.4),
/// independent fair signs.
PerturbParams sample_params(Prng& rng);

AudioBuffer apply_peq(const AudioBuffer& x, const std::vector<PeqSection>& sections);
/// Phase-vocoder stretch (2048 FFT, 512 synthesis hop, identity phase locking)
/// then windowed-sinc resampling.
AudioBuffer apply_pitch_shift(const AudioBuffer& x, double ratio);
/// Cepstral envelope warp E'(f) = E(f / ratio); the excitation is kept.
AudioBuffer apply_formant_shift(const AudioBuffer& x, double ratio, double lifter_ms = kFormantLifterMs);

/// fs(ps(peq(x))). Output peaks above 4x the input peak are scaled down to it.
AudioBuffer perturb(const AudioBuffer& x, const PerturbParams& p);

}  // namespace srave
