#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srave/container.hpp"
#include "srave/model.hpp"
#include "srave/nn.hpp"
#include "srave/tensor.hpp"

namespace srave {

struct StftResolution {
  std::size_t fft_size = 1024;
  std::size_t hop = 256;
  std::size_t window_length = 1024;

  void validate() const;
  std::size_t bins() const { return fft_size / 2 + 1; }
  /// Frame count under centring: 1 + ceil(len / hop).
  std::size_t frames(std::size_t len) const { return 1 + (len + hop - 1) / hop; }
};

/// FFT {2048, 1024, 512} with hops {512, 256, 128}, windows equal to the FFT size.
std::vector<StftResolution> default_resolutions();

inline constexpr float kMagnitudeFloor = 1e-7f;

/// log(max(|STFT|, 1e-7)), [bins x frames]. Frames are centred on t * hop
/// with reflect padding; periodic Hann window centred in the FFT frame.
Tensor stft_logmag(std::span<const float> x, const StftResolution& res);

/// Mean absolute log-magnitude difference.
double loss_stft(std::span<const float> x, std::span<const float> x_hat, const StftResolution& res);
/// Mean of loss_stft over the resolutions.
double loss_mstft(std::span<const float> x, std::span<const float> x_hat,
                  std::span<const StftResolution> resolutions);

/// Discrete speech-unit targets.
struct DsuTargets {
  std::vector<int> class_ids;
  double frame_rate = 50.0;
  std::size_t num_classes = 100;
};

/// Target id for each of `frames` frames at `frame_rate`, picking the target
/// frame nearest in time. Throws InputError if the targets end more than one
/// target frame before the last requested frame.
std::vector<int> align_targets(const DsuTargets& y, std::size_t frames, double frame_rate);

/// Mean over frames of -log softmax(logits)[target], max-subtracted.
double loss_content(std::span<const int> targets, const Tensor& logits);
/// Aligns the targets to the logits' frame rate first.
double loss_content(const DsuTargets& y, const ProjectedLogits& z_p);

/// One discriminator branch: intermediate feature maps and the final score map.
struct BranchOutput {
  std::vector<Tensor> features;
  Tensor score;
};

struct DiscriminatorScores {
  std::vector<Tensor> msd, mpd, mrstft;
};

struct LossWeights {
  double lambda = 0.1;
  void validate() const;
};

inline constexpr std::size_t kMsdScales = 3;
std::vector<std::size_t> mpd_periods();

/// Multi-scale, multi-period and multi-resolution STFT discriminators.
/// Weights live under "disc.msd.*", "disc.mpd.*" and "disc.mrstft.*".
class DiscriminatorSet {
 public:
  DiscriminatorSet(const WeightContainer& weights, std::vector<StftResolution> resolutions);

  static std::vector<ParamSpec> param_specs(std::span<const StftResolution> resolutions);
  static DiscriminatorSet random(std::uint64_t seed,
                                 std::vector<StftResolution> resolutions = default_resolutions());
  /// Weights plus the resolutions under "disc.resolutions".
  WeightContainer to_container() const;
  static DiscriminatorSet from_container(const WeightContainer& c);

  /// Shortest input every branch accepts.
  std::size_t min_length() const;

  std::vector<BranchOutput> msd_forward(std::span<const float> x) const;
  std::vector<BranchOutput> mpd_forward(std::span<const float> x) const;
  std::vector<BranchOutput> mrstftd_forward(std::span<const float> x) const;
  DiscriminatorScores scores(std::span<const float> x) const;

  std::size_t param_count() const;
  const std::vector<StftResolution>& resolutions() const { return resolutions_; }

 private:
  WeightContainer weights_;
  std::vector<StftResolution> resolutions_;
  std::vector<std::vector<Conv1d>> msd_;
  std::vector<std::vector<Conv2d>> mpd_;
  std::vector<std::vector<Conv2d>> mrstft_;
};

/// Average pooling with kernel = stride = factor; a short tail is averaged over what is there.
std::vector<float> avg_pool(std::span<const float> x, std::size_t factor);
/// Reflect-pad to a multiple of `period` and fold into a [1 x period x len/period]
/// slab with element (i, j) = x[j * period + i].
Tensor period_slab(std::span<const float> x, std::size_t period);

/// Hinge generator term: lambda * msd + mpd + mrstft, each family the mean
/// over its branches of mean(-score).
double adv_generator_loss(const DiscriminatorScores& s, const LossWeights& w = {});
/// Hinge discriminator term: per branch mean(relu(1 - real)) + mean(relu(1 + fake)),
/// averaged within each family and weighted like the generator term.
double discriminator_loss(const DiscriminatorScores& real, const DiscriminatorScores& fake,
                          const LossWeights& w = {});
double total_generator_loss(double adv, double mstft, double content);

}  // namespace srave
