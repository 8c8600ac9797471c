#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srave/audio.hpp"
#include "srave/container.hpp"
#include "srave/init.hpp"
#include "srave/nn.hpp"
#include "srave/pqmf.hpp"
#include "srave/speaker.hpp"

namespace srave {

/// Architecture hyper-parameters. Encoder and decoder channel lists have one
/// more entry than their stride lists; both stride products must match.
struct ModelConfig {
  int num_bands = 16;
  int content_bands = 5;
  std::size_t latent_dim = 64;
  std::size_t num_classes = 100;
  std::size_t speaker_dim = kDefaultSpeakerDim;
  std::vector<std::size_t> encoder_channels{96, 192, 384, 768};
  std::vector<std::size_t> encoder_strides{4, 4, 4};
  std::vector<std::size_t> decoder_channels{1024, 512, 256, 128};
  std::vector<std::size_t> decoder_strides{4, 4, 4};
  std::size_t residual_units = 3;
  std::size_t io_kernel = 7;     // encoder input, decoder output convs
  std::size_t inner_kernel = 3;  // residual and bottleneck convs
  float leaky_slope = kLeakySlope;
  float bn_eps = 1e-5f;
  int pqmf_taps = 512;
  double pqmf_attenuation_db = 100.0;

  void validate() const;
  std::size_t stride_product() const;
  /// Audio samples per latent frame.
  std::size_t hop() const { return stride_product() * static_cast<std::size_t>(num_bands); }
  double latent_rate(int sample_rate = kEngineSampleRate) const {
    return static_cast<double>(sample_rate) / static_cast<double>(hop());
  }

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

/// Content latent z, [latent_dim x frames].
struct LatentSequence {
  Tensor z;
  double frame_rate = 0.0;
  std::size_t frames() const { return z.rank() == 2 ? z.length() : 0; }
};

/// Projection-head logits z^p, [num_classes x frames].
struct ProjectedLogits {
  Tensor logits;
  double frame_rate = 0.0;
  std::size_t frames() const { return logits.rank() == 2 ? logits.length() : 0; }
  std::size_t classes() const { return logits.rank() == 2 ? logits.channels() : 0; }
};

/// FiLM parameters for every residual unit, [stage][unit].
using DecoderConditioning = std::vector<std::vector<FiLMParams>>;

struct EncoderState {
  ConvState input;
  std::vector<ConvState> conv, down;
  ConvState output;
};

struct DecoderState {
  ConvState input;
  std::vector<TransposedConvState> up;
  std::vector<std::vector<ConvState>> dilated, pointwise;
  ConvState wave, amp;
};

/// Parameter names, shapes and initializers, in canonical order.
std::vector<ParamSpec> model_param_specs(const ModelConfig& cfg);

struct LayerSummary {
  std::string name;
  std::string kind;
  std::vector<std::size_t> weight_shape;
  std::size_t params = 0;
};

/// Immutable inference graph: content encoder over the low bands, projection
/// head, FiLM-conditioned decoder and the analysis/synthesis filterbank.
class Model {
 public:
  Model(const ModelConfig& cfg, const WeightContainer& weights);

  static Model random(const ModelConfig& cfg, std::uint64_t seed);
  static Model from_container(const WeightContainer& c);
  static Model load(const std::filesystem::path& path);

  const ModelConfig& config() const { return cfg_; }
  const PqmfBank& bank() const { return bank_; }
  const WeightContainer& weights() const { return weights_; }
  /// Weights plus the "__config__" entry.
  WeightContainer to_container() const;

  LatentSequence encode(const BandMatrix& bands) const;
  ProjectedLogits project(const LatentSequence& z) const;
  BandMatrix decode(const LatentSequence& z, const SpeakerEmbedding& e) const;
  BandMatrix decode(const LatentSequence& z, const DecoderConditioning& cond) const;
  /// analyze -> encode -> decode -> synthesize, time-aligned with the input.
  AudioBuffer convert(const AudioBuffer& x, const SpeakerEmbedding& e) const;

  DecoderConditioning condition(const SpeakerEmbedding& e) const;

  EncoderState encoder_state() const;
  DecoderState decoder_state() const;
  /// Streaming steps; chunk lengths must be multiples of the stride product.
  Tensor encode_step(const Tensor& content, EncoderState& st) const;
  Tensor decode_step(const Tensor& z, const DecoderConditioning& cond, DecoderState& st) const;

  /// Scalars stored for inference, projection head excluded.
  std::size_t param_count() const;
  std::size_t projection_param_count() const;
  std::vector<LayerSummary> layers() const;

 private:
  struct EncoderStage {
    BatchNorm bn0;
    Conv1d conv;
    BatchNorm bn1;
    Conv1d down;
  };
  struct ResidualUnit {
    Conv1d dilated;
    Conv1d pointwise;
    Linear film;
  };
  struct DecoderStage {
    ConvTranspose1d up;
    std::vector<ResidualUnit> units;
  };

  Tensor content_rows(const BandMatrix& bands) const;

  ModelConfig cfg_;
  WeightContainer weights_;
  PqmfBank bank_;

  Conv1d enc_in_;
  std::vector<EncoderStage> enc_stages_;
  BatchNorm enc_out_bn_;
  Conv1d enc_out_;
  Conv1d proj_;

  Conv1d dec_in_;
  std::vector<DecoderStage> dec_stages_;
  Conv1d wave_, amp_;
};

}  // namespace srave
