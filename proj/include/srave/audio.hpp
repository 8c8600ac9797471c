#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace srave {

inline constexpr int kEngineSampleRate = 48000;

/// Mono time-domain signal.
struct AudioBuffer {
  int sample_rate = kEngineSampleRate;
  std::vector<float> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// SplitMix64 generator. A plain value: copy it to fork a stream.
class Prng {
 public:
  explicit constexpr Prng(std::uint64_t seed = 0) : state_(seed) {}

  constexpr std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two uniforms per draw.
  double gauss();

  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

std::pair<std::uint64_t, std::uint64_t> prng_next_u64(std::uint64_t state);
std::pair<double, std::uint64_t> prng_gauss(std::uint64_t state);

enum class WavFormat { Pcm16, Float32 };

AudioBuffer load_wav(const std::filesystem::path& path);
void save_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
              WavFormat format = WavFormat::Float32);

AudioBuffer gen_sine(double freq, double duration, int sample_rate,
                     double amplitude = 1.0);
AudioBuffer gen_noise(std::size_t length, std::uint64_t seed,
                      double stddev = 0.1, int sample_rate = kEngineSampleRate);

/// Throws InputError unless the buffer is at the engine rate.
void require_engine_rate(const AudioBuffer& buffer);

double rms(std::span<const float> x);
double peak(std::span<const float> x);

}  // namespace srave
