#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "srave/nn.hpp"

namespace srave {

inline constexpr std::size_t kDefaultSpeakerDim = 512;

/// Identity vector from a speaker-verification encoder.
struct SpeakerEmbedding {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dim() const { return values.size(); }
};

SpeakerEmbedding normalize(const SpeakerEmbedding& e);
/// Normalized arithmetic mean.
SpeakerEmbedding average(std::span<const SpeakerEmbedding> embeddings);
double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

/// gamma = first C outputs of the stage's D -> 2C linear layer, beta = last C.
FiLMParams film_from_embedding(const SpeakerEmbedding& e, const Linear& stage);
/// Inverse of the split: [gamma | beta].
std::vector<float> film_concat(const FiLMParams& p);
FiLMParams film_split(std::span<const float> packed);

/// Deterministic unit-norm embedding for tests and benchmarks.
SpeakerEmbedding synthetic_embedding(std::size_t dim, std::uint64_t seed);

SpeakerEmbedding load_embedding(const std::filesystem::path& path);
void save_embedding(const SpeakerEmbedding& e, const std::filesystem::path& path);

/// Directory of per-utterance embedding files, `<root>/<speaker>/<utterance>.srav`,
/// each holding one normalized "embedding" entry. Writers take an exclusive lock on the
/// speaker directory.
class SpeakerStore {
 public:
  explicit SpeakerStore(std::filesystem::path root);

  void put(const std::string& speaker, const std::string& utterance, const SpeakerEmbedding& e);
  /// Normalized mean over the speaker's utterances.
  SpeakerEmbedding get_speaker(const std::string& speaker) const;
  std::vector<std::string> speakers() const;
  std::vector<std::string> utterances(const std::string& speaker) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::size_t stored_dim() const;  // 0 when empty
  std::filesystem::path root_;
};

}  // namespace srave
