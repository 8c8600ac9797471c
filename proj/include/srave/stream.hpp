#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srave/model.hpp"

namespace srave {

/// Chunked real-time conversion. Owns every cache of the signal path; the
/// model is shared read-only and must outlive the session.
///
/// Output lags the input by algorithmic_latency() samples: sample n of the
/// stream equals sample n - latency of Model::convert on the same signal.
class StreamSession {
 public:
  StreamSession(const Model& model, const SpeakerEmbedding& e, std::size_t chunk_size);

  std::size_t chunk_size() const { return chunk_size_; }
  std::size_t algorithmic_latency() const;
  bool closed() const { return closed_; }

  /// Exactly chunk_size() samples in, chunk_size() samples out.
  std::vector<float> process_chunk(std::span<const float> samples);
  void close() { closed_ = true; }

 private:
  const Model* model_;
  DecoderConditioning cond_;
  std::size_t chunk_size_;
  PqmfAnalyzer analyzer_;
  PqmfSynthesizer synthesizer_;
  EncoderState enc_;
  DecoderState dec_;
  bool closed_ = false;
};

StreamSession open_session(const Model& model, const SpeakerEmbedding& e, std::size_t chunk_size);

enum class BenchMode { Offline, Streaming };

struct BenchReport {
  double speed_hz = 0.0;      ///< generated samples per second of wall time
  double rtf = 0.0;           ///< processing time / audio duration
  std::size_t trials = 0;
  std::size_t chunk = 0;      ///< samples per decode call
  std::size_t samples = 0;    ///< samples generated per trial
  int sample_rate = kEngineSampleRate;
  double mean_seconds = 0.0;
  BenchMode mode = BenchMode::Offline;
  std::string thread_mode = "single";

  std::string to_json() const;
};

inline constexpr std::size_t kDefaultBenchTrials = 100;

/// Times decode + synthesis from random latents and a random embedding.
/// One untimed warm-up run precedes the trials.
BenchReport bench(const Model& model, double audio_duration, std::size_t trials = kDefaultBenchTrials,
                  BenchMode mode = BenchMode::Offline, std::size_t chunk_size = 0,
                  std::uint64_t seed = 0);

}  // namespace srave
