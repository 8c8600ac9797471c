#include "srave/losses.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "srave/error.hpp"
#include "srave/fft.hpp"
#include "srave/init.hpp"

namespace srave {

namespace {

// Mirror index for reflect padding (edge sample not repeated).
std::size_t reflect(std::ptrdiff_t i, std::size_t len) {
  if (len == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (len - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(len)) m = period - m;
  return static_cast<std::size_t>(m);
}

double mean_of(const Tensor& t, double (*f)(float)) {
  if (t.numel() == 0) throw InputError("empty score map");
  double s = 0.0;
  for (float v : t.data) s += f(v);
  return s / static_cast<double>(t.numel());
}

// Layer tables: {in, out, kernel, stride}. The last row of each emits the score.
struct Layer1 {
  std::size_t in, out, kernel, stride;
};
constexpr Layer1 kMsdLayers[] = {
    {1, 16, 15, 1}, {16, 32, 21, 4}, {32, 64, 21, 4}, {64, 128, 21, 4}, {128, 128, 5, 1}, {128, 1, 3, 1},
};
// MPD kernels span the time axis of the period slab only.
constexpr Layer1 kMpdLayers[] = {
    {1, 16, 5, 3}, {16, 32, 5, 3}, {32, 64, 5, 3}, {64, 128, 5, 3}, {128, 128, 5, 1}, {128, 1, 3, 1},
};
struct Layer2 {
  std::size_t in, out, kh, kw, sh, sw;
};
// Spectrogram layers: height is frequency, width is time.
constexpr Layer2 kMrstftLayers[] = {
    {1, 16, 3, 9, 1, 1},  {16, 16, 3, 9, 2, 1}, {16, 16, 3, 9, 2, 1},
    {16, 16, 3, 9, 2, 1}, {16, 16, 3, 3, 1, 1}, {16, 1, 3, 3, 1, 1},
};

std::string msd_name(std::size_t s, std::size_t l) {
  return "disc.msd.s" + std::to_string(s) + ".l" + std::to_string(l);
}
std::string mpd_name(std::size_t p, std::size_t l) {
  return "disc.mpd.p" + std::to_string(p) + ".l" + std::to_string(l);
}
std::string mrstft_name(std::size_t r, std::size_t l) {
  return "disc.mrstft.r" + std::to_string(r) + ".l" + std::to_string(l);
}

const Tensor& weight_of(const WeightContainer& w, const std::string& name, const std::vector<std::size_t>& shape) {
  const Tensor& t = w.get(name);
  if (t.shape != shape) {
    throw ModelError(name + ": expected shape " + shape_string(shape) + ", got " + shape_string(t.shape));
  }
  return t;
}

template <class Stack>
std::vector<Tensor> run_stack(const Stack& layers, Tensor h, std::vector<Tensor>& features) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h);
    if (l + 1 < layers.size()) {
      leaky_relu_inplace(h, kLeakySlope);
      features.push_back(h);
    }
  }
  return {h};
}

template <class Stack>
BranchOutput run_branch(const Stack& layers, Tensor input) {
  BranchOutput out;
  out.score = run_stack(layers, std::move(input), out.features).front();
  return out;
}

double family_mean(const std::vector<Tensor>& maps, double (*f)(float), const char* family) {
  if (maps.empty()) throw InputError(std::string("missing discriminator family: ") + family);
  double s = 0.0;
  for (const auto& m : maps) s += mean_of(m, f);
  return s / static_cast<double>(maps.size());
}

double family_hinge(const std::vector<Tensor>& real, const std::vector<Tensor>& fake, const char* family) {
  if (real.empty() || fake.empty()) throw InputError(std::string("missing discriminator family: ") + family);
  if (real.size() != fake.size()) throw InputError(std::string("mismatched branch count in ") + family);
  double s = 0.0;
  for (std::size_t b = 0; b < real.size(); ++b) {
    if (real[b].shape != fake[b].shape) throw InputError(std::string("mismatched score shapes in ") + family);
    s += mean_of(real[b], [](float v) { return std::max(0.0, 1.0 - v); });
    s += mean_of(fake[b], [](float v) { return std::max(0.0, 1.0 + v); });
  }
  return s / static_cast<double>(real.size());
}

}  // namespace

void StftResolution::validate() const {
  if (hop < 1 || hop > window_length || window_length > fft_size) {
    throw InputError("stft resolution needs 1 <= hop <= window_length <= fft_size (got hop " +
                     std::to_string(hop) + ", window " + std::to_string(window_length) + ", fft " +
                     std::to_string(fft_size) + ")");
  }
}

std::vector<StftResolution> default_resolutions() {
  return {{2048, 512, 2048}, {1024, 256, 1024}, {512, 128, 512}};
}

Tensor stft_logmag(std::span<const float> x, const StftResolution& res) {
  res.validate();
  if (x.size() < res.window_length) {
    throw InputError("stft: signal of " + std::to_string(x.size()) + " samples is shorter than one window (" +
                     std::to_string(res.window_length) + ")");
  }
  const std::size_t n = res.fft_size;
  const std::size_t frames = res.frames(x.size());
  const auto window = hann_window(res.window_length);
  const std::size_t offset = (n - res.window_length) / 2;

  RealFft fft(n);
  std::vector<double> frame(n);
  std::vector<std::complex<double>> spec(fft.bins());
  Tensor out({fft.bins(), frames});
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const auto start = static_cast<std::ptrdiff_t>(t * res.hop) - static_cast<std::ptrdiff_t>(n / 2);
    for (std::size_t i = 0; i < res.window_length; ++i) {
      const std::size_t src = reflect(start + static_cast<std::ptrdiff_t>(offset + i), x.size());
      frame[offset + i] = static_cast<double>(x[src]) * window[i];
    }
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      out.at(k, t) = static_cast<float>(std::log(std::max(std::abs(spec[k]), static_cast<double>(kMagnitudeFloor))));
    }
  }
  return out;
}

double loss_stft(std::span<const float> x, std::span<const float> x_hat, const StftResolution& res) {
  if (x.size() != x_hat.size()) {
    throw InputError("loss_stft: length mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(x_hat.size()) + ")");
  }
  const Tensor a = stft_logmag(x, res);
  const Tensor b = stft_logmag(x_hat, res);
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return s / static_cast<double>(a.numel());
}

double loss_mstft(std::span<const float> x, std::span<const float> x_hat,
                  std::span<const StftResolution> resolutions) {
  if (resolutions.empty()) throw InputError("loss_mstft: no resolutions");
  double s = 0.0;
  for (const auto& r : resolutions) s += loss_stft(x, x_hat, r);
  return s / static_cast<double>(resolutions.size());
}

std::vector<int> align_targets(const DsuTargets& y, std::size_t frames, double frame_rate) {
  if (y.class_ids.empty()) throw InputError("dsu targets are empty");
  if (!(y.frame_rate > 0.0) || !(frame_rate > 0.0)) throw InputError("frame rates must be positive");
  const std::size_t n = y.class_ids.size();
  std::vector<int> out(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / frame_rate;
    const auto j = static_cast<std::size_t>(std::llround(t * y.frame_rate));
    if (j > n) {
      throw InputError("dsu targets cover " + std::to_string(n) + " frames at " + std::to_string(y.frame_rate) +
                       " Hz, too short for " + std::to_string(frames) + " frames at " +
                       std::to_string(frame_rate) + " Hz");
    }
    out[i] = y.class_ids[std::min(j, n - 1)];
  }
  return out;
}

double loss_content(std::span<const int> targets, const Tensor& logits) {
  if (logits.rank() != 2) throw InputError("loss_content: logits must be [classes x frames]");
  const std::size_t k = logits.channels(), frames = logits.length();
  if (targets.size() != frames) {
    throw InputError("loss_content: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(frames) + " frames");
  }
  if (frames == 0) throw InputError("loss_content: no frames");
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    const int y = targets[t];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InputError("loss_content: class id " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits.at(c, t)));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(logits.at(c, t)) - mx);
    total += std::log(z) - (static_cast<double>(logits.at(static_cast<std::size_t>(y), t)) - mx);
  }
  return total / static_cast<double>(frames);
}

double loss_content(const DsuTargets& y, const ProjectedLogits& z_p) {
  if (z_p.classes() != y.num_classes) {
    throw InputError("loss_content: logits have " + std::to_string(z_p.classes()) + " classes, targets " +
                     std::to_string(y.num_classes));
  }
  const auto aligned = align_targets(y, z_p.frames(), z_p.frame_rate);
  return loss_content(aligned, z_p.logits);
}

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");
}

std::vector<std::size_t> mpd_periods() { return {2, 3, 5, 7, 11}; }

std::vector<float> avg_pool(std::span<const float> x, std::size_t factor) {
  if (factor == 0) throw InputError("avg_pool: factor must be positive");
  std::vector<float> out((x.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t a = i * factor, b = std::min(a + factor, x.size());
    double s = 0.0;
    for (std::size_t j = a; j < b; ++j) s += x[j];
    out[i] = static_cast<float>(s / static_cast<double>(b - a));
  }
  return out;
}

Tensor period_slab(std::span<const float> x, std::size_t period) {
  if (period == 0 || x.empty()) throw InputError("period_slab: empty input or zero period");
  const std::size_t cols = (x.size() + period - 1) / period;
  Tensor slab({1, period, cols});
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < period; ++i) {
      const std::size_t n = j * period + i;
      // Positions past the end mirror back into the signal.
      const std::size_t src = n < x.size() ? n : reflect(static_cast<std::ptrdiff_t>(n), x.size());
      slab.data[i * cols + j] = x[src];
    }
  return slab;
}

std::vector<ParamSpec> DiscriminatorSet::param_specs(std::span<const StftResolution> resolutions) {
  std::vector<ParamSpec> specs;
  auto add = [&specs](const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in) {
    const std::size_t out = shape.front();
    specs.push_back({name + ".weight", std::move(shape), Init::Kaiming, fan_in});
    specs.push_back({name + ".bias", {out}, Init::Zeros, 1});
  };
  for (std::size_t s = 0; s < kMsdScales; ++s)
    for (std::size_t l = 0; l < std::size(kMsdLayers); ++l) {
      const auto& L = kMsdLayers[l];
      add(msd_name(s, l), {L.out, L.in, L.kernel}, L.in * L.kernel);
    }
  for (std::size_t p : mpd_periods())
    for (std::size_t l = 0; l < std::size(kMpdLayers); ++l) {
      const auto& L = kMpdLayers[l];
      add(mpd_name(p, l), {L.out, L.in, 1, L.kernel}, L.in * L.kernel);
    }
  for (std::size_t r = 0; r < resolutions.size(); ++r)
    for (std::size_t l = 0; l < std::size(kMrstftLayers); ++l) {
      const auto& L = kMrstftLayers[l];
      add(mrstft_name(r, l), {L.out, L.in, L.kh, L.kw}, L.in * L.kh * L.kw);
    }
  return specs;
}

DiscriminatorSet::DiscriminatorSet(const WeightContainer& weights, std::vector<StftResolution> resolutions)
    : weights_(weights), resolutions_(std::move(resolutions)) {
  if (resolutions_.empty()) throw ModelError("discriminator set needs at least one STFT resolution");
  for (const auto& r : resolutions_) r.validate();
  for (std::size_t s = 0; s < kMsdScales; ++s) {
    auto& stack = msd_.emplace_back();
    for (std::size_t l = 0; l < std::size(kMsdLayers); ++l) {
      const auto& L = kMsdLayers[l];
      const ConvSpec spec{L.in, L.out, L.kernel, L.stride, 1, false};
      const std::string n = msd_name(s, l);
      stack.emplace_back(spec, weight_of(weights_, n + ".weight", spec.weight_shape()),
                         weight_of(weights_, n + ".bias", {L.out}));
    }
  }
  for (std::size_t p : mpd_periods()) {
    auto& stack = mpd_.emplace_back();
    for (std::size_t l = 0; l < std::size(kMpdLayers); ++l) {
      const auto& L = kMpdLayers[l];
      const Conv2dSpec spec{L.in, L.out, 1, L.kernel, 1, L.stride};
      const std::string n = mpd_name(p, l);
      stack.emplace_back(spec, weight_of(weights_, n + ".weight", spec.weight_shape()),
                         weight_of(weights_, n + ".bias", {L.out}));
    }
  }
  for (std::size_t r = 0; r < resolutions_.size(); ++r) {
    auto& stack = mrstft_.emplace_back();
    for (std::size_t l = 0; l < std::size(kMrstftLayers); ++l) {
      const auto& L = kMrstftLayers[l];
      const Conv2dSpec spec{L.in, L.out, L.kh, L.kw, L.sh, L.sw};
      const std::string n = mrstft_name(r, l);
      stack.emplace_back(spec, weight_of(weights_, n + ".weight", spec.weight_shape()),
                         weight_of(weights_, n + ".bias", {L.out}));
    }
  }
}

DiscriminatorSet DiscriminatorSet::random(std::uint64_t seed, std::vector<StftResolution> resolutions) {
  const auto specs = param_specs(resolutions);
  return DiscriminatorSet(init_random(specs, seed), std::move(resolutions));
}

WeightContainer DiscriminatorSet::to_container() const {
  WeightContainer c = weights_;
  Tensor res({resolutions_.size(), 3});
  for (std::size_t i = 0; i < resolutions_.size(); ++i) {
    res.at(i, 0) = static_cast<float>(resolutions_[i].fft_size);
    res.at(i, 1) = static_cast<float>(resolutions_[i].hop);
    res.at(i, 2) = static_cast<float>(resolutions_[i].window_length);
  }
  c.set("disc.resolutions", res);
  return c;
}

DiscriminatorSet DiscriminatorSet::from_container(const WeightContainer& c) {
  const Tensor* res = c.find("disc.resolutions");
  if (res == nullptr || res->rank() != 2 || res->dim(1) != 3) {
    throw ModelError("container has no valid 'disc.resolutions' entry");
  }
  std::vector<StftResolution> rs;
  for (std::size_t i = 0; i < res->dim(0); ++i) {
    rs.push_back({static_cast<std::size_t>(res->at(i, 0)), static_cast<std::size_t>(res->at(i, 1)),
                  static_cast<std::size_t>(res->at(i, 2))});
  }
  WeightContainer w;
  for (const auto& [name, t] : c.entries()) {
    if (name.rfind("disc.", 0) == 0 && name != "disc.resolutions") w.put(name, t);
  }
  return DiscriminatorSet(w, std::move(rs));
}

std::size_t DiscriminatorSet::min_length() const {
  std::size_t m = 1;
  for (const auto& r : resolutions_) m = std::max(m, r.window_length);
  return m;
}

std::vector<BranchOutput> DiscriminatorSet::msd_forward(std::span<const float> x) const {
  if (x.size() < min_length()) throw InputError("discriminator input shorter than " + std::to_string(min_length()));
  std::vector<BranchOutput> out;
  for (std::size_t s = 0; s < msd_.size(); ++s) {
    const auto pooled = avg_pool(x, std::size_t{1} << s);
    out.push_back(run_branch(msd_[s], Tensor({1, pooled.size()}, pooled)));
  }
  return out;
}

std::vector<BranchOutput> DiscriminatorSet::mpd_forward(std::span<const float> x) const {
  if (x.size() < min_length()) throw InputError("discriminator input shorter than " + std::to_string(min_length()));
  std::vector<BranchOutput> out;
  const auto periods = mpd_periods();
  for (std::size_t i = 0; i < periods.size(); ++i) out.push_back(run_branch(mpd_[i], period_slab(x, periods[i])));
  return out;
}

std::vector<BranchOutput> DiscriminatorSet::mrstftd_forward(std::span<const float> x) const {
  if (x.size() < min_length()) throw InputError("discriminator input shorter than " + std::to_string(min_length()));
  std::vector<BranchOutput> out;
  for (std::size_t r = 0; r < resolutions_.size(); ++r) {
    Tensor spec = stft_logmag(x, resolutions_[r]);
    spec.shape.insert(spec.shape.begin(), 1);
    out.push_back(run_branch(mrstft_[r], std::move(spec)));
  }
  return out;
}

DiscriminatorScores DiscriminatorSet::scores(std::span<const float> x) const {
  DiscriminatorScores s;
  for (auto& b : msd_forward(x)) s.msd.push_back(std::move(b.score));
  for (auto& b : mpd_forward(x)) s.mpd.push_back(std::move(b.score));
  for (auto& b : mrstftd_forward(x)) s.mrstft.push_back(std::move(b.score));
  return s;
}

std::size_t DiscriminatorSet::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : weights_.entries()) n += t.numel();
  return n;
}

double adv_generator_loss(const DiscriminatorScores& s, const LossWeights& w) {
  w.validate();
  auto neg = [](float v) { return -static_cast<double>(v); };
  return w.lambda * family_mean(s.msd, neg, "msd") + family_mean(s.mpd, neg, "mpd") +
         family_mean(s.mrstft, neg, "mrstft");
}

double discriminator_loss(const DiscriminatorScores& real, const DiscriminatorScores& fake, const LossWeights& w) {
  w.validate();
  return w.lambda * family_hinge(real.msd, fake.msd, "msd") + family_hinge(real.mpd, fake.mpd, "mpd") +
         family_hinge(real.mrstft, fake.mrstft, "mrstft");
}

double total_generator_loss(double adv, double mstft, double content) { return adv + mstft + content; }

}  // namespace srave
