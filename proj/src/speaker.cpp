#include "srave/speaker.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>

#include "srave/audio.hpp"
#include "srave/container.hpp"
#include "srave/error.hpp"

namespace srave {

namespace fs = std::filesystem;

namespace {

double norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

void check_id(const std::string& id, const char* what) {
  if (id.empty() || id == "." || id == ".." || id.find('/') != std::string::npos ||
      id.find('\\') != std::string::npos) {
    throw InputError(std::string("invalid ") + what + " id: '" + id + "'");
  }
}

// Exclusive advisory lock held for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    const auto path = (dir / ".lock").string();
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
      if (fd_ >= 0) ::close(fd_);
      throw ModelError("cannot lock speaker directory " + dir.string());
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

SpeakerEmbedding normalize(const SpeakerEmbedding& e) {
  const double n = norm(e.values);
  if (!(n > 0.0) || !std::isfinite(n)) throw InputError("normalize: zero or non-finite embedding");
  SpeakerEmbedding out{e.values, true};
  for (float& v : out.values) v = static_cast<float>(v / n);
  return out;
}

SpeakerEmbedding average(std::span<const SpeakerEmbedding> embeddings) {
  if (embeddings.empty()) throw InputError("average: no embeddings");
  const std::size_t dim = embeddings.front().dim();
  std::vector<double> acc(dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.dim() != dim) throw InputError("average: embedding dimensions differ");
    for (std::size_t i = 0; i < dim; ++i) acc[i] += e.values[i];
  }
  SpeakerEmbedding mean;
  mean.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    mean.values[i] = static_cast<float>(acc[i] / static_cast<double>(embeddings.size()));
  }
  if (norm(mean.values) == 0.0) throw InputError("average: embeddings cancel to a zero vector");
  return normalize(mean);
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.dim() != b.dim()) throw InputError("cosine_similarity: dimension mismatch");
  const double na = norm(a.values), nb = norm(b.values);
  if (na == 0.0 || nb == 0.0) throw InputError("cosine_similarity: zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

FiLMParams film_from_embedding(const SpeakerEmbedding& e, const Linear& stage) {
  if (stage.out_features() % 2 != 0) throw ModelError("film layer must have an even output width");
  if (e.dim() != stage.in_features()) {
    throw InputError("speaker embedding has dimension " + std::to_string(e.dim()) +
                     ", FiLM layer expects " + std::to_string(stage.in_features()));
  }
  return film_split(stage.apply(e.values));
}

std::vector<float> film_concat(const FiLMParams& p) {
  std::vector<float> out(p.gamma);
  out.insert(out.end(), p.beta.begin(), p.beta.end());
  return out;
}

FiLMParams film_split(std::span<const float> packed) {
  if (packed.size() % 2 != 0) throw InputError("film_split: odd parameter count");
  const std::size_t c = packed.size() / 2;
  return FiLMParams{{packed.begin(), packed.begin() + static_cast<std::ptrdiff_t>(c)},
                    {packed.begin() + static_cast<std::ptrdiff_t>(c), packed.end()}};
}

SpeakerEmbedding synthetic_embedding(std::size_t dim, std::uint64_t seed) {
  Prng rng(seed);
  SpeakerEmbedding e;
  e.values.resize(dim);
  for (float& v : e.values) v = static_cast<float>(rng.gauss());
  return normalize(e);
}

SpeakerEmbedding load_embedding(const fs::path& path) {
  const auto c = load_container(path);
  const Tensor* t = c.find("embedding");
  if (t == nullptr) throw ModelError(path.string() + ": no 'embedding' entry");
  if (t->rank() != 1 || t->numel() == 0) throw ModelError(path.string() + ": embedding must be a non-empty vector");
  SpeakerEmbedding e{t->data, false};
  const double n = norm(e.values);
  e.normalized = std::fabs(n - 1.0) <= 1e-5;
  return e;
}

void save_embedding(const SpeakerEmbedding& e, const fs::path& path) {
  WeightContainer c;
  c.put("embedding", Tensor({e.dim()}, e.values));
  save_container(c, path);
}

SpeakerStore::SpeakerStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

std::size_t SpeakerStore::stored_dim() const {
  for (const auto& speaker : speakers()) {
    for (const auto& utt : utterances(speaker)) {
      return load_embedding(root_ / speaker / (utt + ".srav")).dim();
    }
  }
  return 0;
}

void SpeakerStore::put(const std::string& speaker, const std::string& utterance,
                       const SpeakerEmbedding& e) {
  check_id(speaker, "speaker");
  check_id(utterance, "utterance");
  if (e.dim() == 0) throw InputError("store_put: empty embedding");
  const SpeakerEmbedding unit = normalize(e);
  const std::size_t existing = stored_dim();
  if (existing != 0 && existing != e.dim()) {
    throw InputError("store_put: dimension clash (store holds " + std::to_string(existing) +
                     "-dim embeddings, got " + std::to_string(e.dim()) + ")");
  }
  const auto dir = root_ / speaker;
  fs::create_directories(dir);
  DirLock lock(dir);
  save_embedding(unit, dir / (utterance + ".srav"));
}

std::vector<std::string> SpeakerStore::speakers() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> SpeakerStore::utterances(const std::string& speaker) const {
  check_id(speaker, "speaker");
  std::vector<std::string> out;
  const auto dir = root_ / speaker;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".srav") {
      out.push_back(entry.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

SpeakerEmbedding SpeakerStore::get_speaker(const std::string& speaker) const {
  const auto utts = utterances(speaker);
  if (utts.empty()) throw InputError("unknown speaker: " + speaker);
  std::vector<SpeakerEmbedding> all;
  for (const auto& u : utts) all.push_back(load_embedding(root_ / speaker / (u + ".srav")));
  return average(all);
}

}  // namespace srave
