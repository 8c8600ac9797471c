#include "srave/stream.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"

#include "srave/error.hpp"

namespace srave {

StreamSession::StreamSession(const Model& model, const SpeakerEmbedding& e, std::size_t chunk_size)
    : model_(&model),
      cond_(model.condition(e)),
      chunk_size_(chunk_size),
      analyzer_(model.bank()),
      synthesizer_(model.bank()),
      enc_(model.encoder_state()),
      dec_(model.decoder_state()) {
  const std::size_t hop = model.config().hop();
  if (chunk_size == 0 || chunk_size % hop != 0) {
    throw InputError("chunk size " + std::to_string(chunk_size) + " is not a positive multiple of " +
                     std::to_string(hop));
  }
}

std::size_t StreamSession::algorithmic_latency() const {
  // The decoder emits band frames aligned with the latent frame that produced
  // them, so only the filterbank delays the signal.
  return static_cast<std::size_t>(model_->bank().group_delay());
}

std::vector<float> StreamSession::process_chunk(std::span<const float> samples) {
  if (closed_) throw InputError("process_chunk: session closed");
  if (samples.size() != chunk_size_) {
    throw InputError("process_chunk: expected " + std::to_string(chunk_size_) + " samples, got " +
                     std::to_string(samples.size()));
  }
  const auto& cfg = model_->config();
  const BandMatrix bands = analyzer_.process(samples);
  const auto rows = static_cast<std::size_t>(cfg.content_bands);
  Tensor content({rows, bands.frames});
  std::copy(bands.data.begin(), bands.data.begin() + static_cast<std::ptrdiff_t>(rows * bands.frames),
            content.data.begin());
  const Tensor z = model_->encode_step(content, enc_);
  Tensor y = model_->decode_step(z, cond_, dec_);
  BandMatrix out(cfg.num_bands, y.length(), bands.band_rate);
  out.data = std::move(y.data);
  return synthesizer_.process(out);
}

StreamSession open_session(const Model& model, const SpeakerEmbedding& e, std::size_t chunk_size) {
  return StreamSession(model, e, chunk_size);
}

std::string BenchReport::to_json() const {
  nlohmann::json j{{"speed_hz", speed_hz},
                   {"rtf", rtf},
                   {"trials", trials},
                   {"chunk", chunk},
                   {"samples", samples},
                   {"sample_rate", sample_rate},
                   {"mean_seconds", mean_seconds},
                   {"mode", mode == BenchMode::Offline ? "offline" : "streaming"},
                   {"thread_mode", thread_mode}};
  return j.dump();
}

BenchReport bench(const Model& model, double audio_duration, std::size_t trials, BenchMode mode,
                  std::size_t chunk_size, std::uint64_t seed) {
  if (trials < 1) throw InputError("bench: trials must be >= 1");
  if (!(audio_duration > 0.0)) throw InputError("bench: duration must be positive");
  const auto& cfg = model.config();
  const std::size_t hop = cfg.hop();
  const auto frames = static_cast<std::size_t>(
      std::max(1.0, std::ceil(audio_duration * kEngineSampleRate / static_cast<double>(hop))));
  if (mode == BenchMode::Streaming) {
    if (chunk_size == 0) chunk_size = hop;
    if (chunk_size % hop != 0) throw InputError("bench: chunk size must be a multiple of " + std::to_string(hop));
  } else {
    chunk_size = frames * hop;
  }
  const std::size_t frames_per_chunk = chunk_size / hop;

  Prng rng(seed);
  Tensor z({cfg.latent_dim, frames});
  for (float& v : z.data) v = static_cast<float>(rng.gauss());
  const auto cond = model.condition(synthetic_embedding(cfg.speaker_dim, rng.next_u64()));
  const double latent_rate = cfg.latent_rate();

  auto run_once = [&] {
    std::size_t produced = 0;
    if (mode == BenchMode::Offline) {
      const auto bands = model.decode(LatentSequence{z, latent_rate}, cond);
      produced = synthesize(model.bank(), bands).size();
    } else {
      auto dec = model.decoder_state();
      PqmfSynthesizer synth(model.bank());
      for (std::size_t f = 0; f < frames; f += frames_per_chunk) {
        const std::size_t n = std::min(frames_per_chunk, frames - f);
        Tensor y = model.decode_step(slice_time(z, f, n), cond, dec);
        BandMatrix b(cfg.num_bands, y.length(), 0.0);
        b.data = std::move(y.data);
        produced += synth.process(b).size();
      }
    }
    return produced;
  };

  run_once();  // warm-up
  double total = 0.0;
  std::size_t samples = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    samples = run_once();
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  BenchReport r;
  r.trials = trials;
  r.chunk = chunk_size;
  r.samples = samples;
  r.mode = mode;
  r.mean_seconds = total / static_cast<double>(trials);
  r.speed_hz = static_cast<double>(samples) / r.mean_seconds;
  r.rtf = r.mean_seconds / (static_cast<double>(samples) / kEngineSampleRate);
  return r;
}

}  // namespace srave
