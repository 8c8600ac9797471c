#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "srave/audio.hpp"
#include "srave/error.hpp"
#include "srave/pqmf.hpp"

using namespace srave;

namespace {

const PqmfBank& default_bank() {
  static const PqmfBank bank = design_bank(16, 100.0, 512);
  return bank;
}

// Direct-form oracle: filter with h_b, keep every M-th output at phase M-1.
std::vector<std::vector<double>> direct_analysis(const PqmfBank& bank,
                                                 const std::vector<float>& x) {
  const int m = bank.num_bands();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m));
  for (int b = 0; b < m; ++b) {
    const auto h = bank.analysis_filter(b);
    for (std::size_t a = static_cast<std::size_t>(m) - 1; a < x.size(); a += static_cast<std::size_t>(m)) {
      double acc = 0.0;
      for (std::size_t n = 0; n < h.size() && n <= a; ++n) acc += h[n] * x[a - n];
      out[static_cast<std::size_t>(b)].push_back(acc);
    }
  }
  return out;
}

// Direct-form oracle: upsample by M, filter with g_b, sum over bands.
std::vector<double> direct_synthesis(const PqmfBank& bank,
                                     const std::vector<std::vector<double>>& bands) {
  const auto m = static_cast<std::size_t>(bank.num_bands());
  const std::size_t len = bands[0].size() * m;
  std::vector<double> y(len, 0.0);
  for (std::size_t b = 0; b < m; ++b) {
    const auto g = bank.synthesis_filter(static_cast<int>(b));
    for (std::size_t f = 0; f < bands[b].size(); ++f) {
      for (std::size_t n = 0; n < g.size() && f * m + n < len; ++n) {
        y[f * m + n] += g[n] * bands[b][f];
      }
    }
  }
  return y;
}

double energy(std::span<const float> x) {
  double e = 0.0;
  for (float v : x) e += static_cast<double>(v) * v;
  return e;
}

}  // namespace

TEST_CASE("prototype is linear phase") {
  const auto& bank = default_bank();
  const auto& p = bank.prototype();
  REQUIRE(p.size() == 512);
  for (std::size_t i = 0; i < p.size(); ++i) {
    REQUIRE(std::fabs(p[i] - p[p.size() - 1 - i]) <= 1e-12);
  }
  CHECK(bank.group_delay() == 496);
}

TEST_CASE("polyphase paths agree with direct-form filtering") {
  const auto& bank = default_bank();
  auto x = gen_noise(2048, 5, 0.3);
  const auto ref = direct_analysis(bank, x.samples);
  const auto bands = analyze(bank, x);
  for (int b = 0; b < 16; ++b) {
    for (std::size_t f = 0; f < bands.frames; ++f) {
      REQUIRE(bands.at(b, f) == doctest::Approx(ref[static_cast<std::size_t>(b)][f]).epsilon(1e-5).scale(1e-6));
    }
  }
  const auto y = synthesize(bank, bands);
  std::vector<std::vector<double>> as_double(16);
  for (int b = 0; b < 16; ++b) as_double[static_cast<std::size_t>(b)].assign(bands.band(b).begin(), bands.band(b).end());
  const auto yref = direct_synthesis(bank, as_double);
  REQUIRE(y.size() == yref.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    REQUIRE(y.samples[i] == doctest::Approx(yref[i]).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("round trip reconstructs white noise, tones and coloured noise") {
  const auto& bank = default_bank();
  auto noise = gen_noise(48000, 1, 0.3);
  CHECK(round_trip_snr_db(bank, noise, 512) >= 60.0);

  auto tone = gen_sine(1000, 1.0, 48000, 0.5);
  CHECK(round_trip_snr_db(bank, tone, 512) >= 60.0);

  // Speech-shaped: one-pole low-passed noise, most energy below 1 kHz.
  auto coloured = gen_noise(48000, 2, 0.3);
  float state = 0.0f;
  for (auto& v : coloured.samples) v = state = 0.9f * state + 0.1f * v;
  CHECK(round_trip_snr_db(bank, coloured, 512) >= 60.0);
}

TEST_CASE("analysis shapes, zeros and energy") {
  const auto& bank = default_bank();
  AudioBuffer zeros{48000, std::vector<float>(48000, 0.0f)};
  auto z = analyze(bank, zeros);
  CHECK(z.num_bands == 16);
  CHECK(z.frames == 3000);
  CHECK(z.band_rate == 3000.0);
  CHECK(std::all_of(z.data.begin(), z.data.end(), [](float v) { return v == 0.0f; }));
  auto y = synthesize(bank, z);
  CHECK(y.size() == 48000);
  CHECK(std::all_of(y.samples.begin(), y.samples.end(), [](float v) { return v == 0.0f; }));

  auto noise = gen_noise(48000, 9, 0.3);
  auto bands = analyze(bank, noise);
  CHECK(energy(bands.data) == doctest::Approx(energy(noise.samples)).epsilon(0.01));

  CHECK_THROWS_AS(analyze(bank, AudioBuffer{48000, std::vector<float>(100, 0.0f)}), InputError);
}

TEST_CASE("frequency selectivity") {
  const auto& bank = default_bank();
  auto band_fraction = [&](const AudioBuffer& x, int band, std::size_t skip) {
    auto bands = analyze(bank, x);
    double total = 0.0, in_band = 0.0;
    for (int b = 0; b < bands.num_bands; ++b) {
      for (std::size_t f = skip; f < bands.frames; ++f) {
        const double e = static_cast<double>(bands.at(b, f)) * bands.at(b, f);
        total += e;
        if (b == band) in_band += e;
      }
    }
    return in_band / total;
  };

  AudioBuffer dc{48000, std::vector<float>(48000, 0.5f)};
  CHECK(band_fraction(dc, 0, 64) >= 0.99);

  auto tone = gen_sine(500, 1.0, 48000, 0.5);
  CHECK(band_fraction(tone, 0, 64) >= 0.95);

  // Band 5 covers 7.5-9 kHz.
  auto high = gen_sine(8250, 1.0, 48000, 0.5);
  CHECK(band_fraction(high, 5, 64) >= 0.95);
}

TEST_CASE("streaming analysis equals offline analysis") {
  const auto& bank = default_bank();
  auto x = gen_noise(4800, 21, 0.3);
  const auto offline = analyze(bank, x);

  PqmfAnalyzer stream(bank);
  std::vector<BandMatrix> parts;
  for (int c = 0; c < 10; ++c) {
    parts.push_back(stream.process(std::span<const float>(x.samples).subspan(static_cast<std::size_t>(c) * 480, 480)));
  }
  for (int b = 0; b < 16; ++b) {
    std::size_t t = 0;
    for (const auto& part : parts) {
      for (std::size_t f = 0; f < part.frames; ++f, ++t) {
        REQUIRE(std::fabs(part.at(b, f) - offline.at(b, t)) <= 1e-6);
      }
    }
  }

  SUBCASE("empty chunk leaves state unchanged") {
    PqmfAnalyzer a(bank), b(bank);
    auto first = std::span<const float>(x.samples).first(160);
    a.process(first);
    b.process(first);
    auto empty = a.process({});
    CHECK(empty.frames == 0);
    auto na = a.process(std::span<const float>(x.samples).subspan(160, 160));
    auto nb = b.process(std::span<const float>(x.samples).subspan(160, 160));
    CHECK(na.data == nb.data);
  }

  SUBCASE("misaligned chunk") {
    PqmfAnalyzer a(bank);
    CHECK_THROWS_AS(a.process(std::span<const float>(x.samples).first(7)), InputError);
  }
}

TEST_CASE("streaming equivalence over random partitions") {
  const auto& bank = default_bank();
  auto x = gen_noise(16 * 400, 31, 0.3);
  const auto offline = analyze(bank, x);
  const auto offline_audio = synthesize(bank, offline);
  Prng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    PqmfAnalyzer a(bank);
    PqmfSynthesizer s(bank);
    std::size_t pos = 0, frame = 0;
    std::vector<float> audio;
    while (pos < x.size()) {
      const std::size_t frames = std::min<std::size_t>(rng.next_u64() % 40, (x.size() - pos) / 16);
      auto part = a.process(std::span<const float>(x.samples).subspan(pos, frames * 16));
      for (int b = 0; b < 16; ++b) {
        for (std::size_t f = 0; f < part.frames; ++f) {
          REQUIRE(std::fabs(part.at(b, f) - offline.at(b, frame + f)) <= 1e-6);
        }
      }
      auto chunk_audio = s.process(part);
      audio.insert(audio.end(), chunk_audio.begin(), chunk_audio.end());
      pos += frames * 16;
      frame += frames;
    }
    REQUIRE(audio.size() == offline_audio.size());
    for (std::size_t i = 0; i < audio.size(); ++i) {
      REQUIRE(std::fabs(audio[i] - offline_audio.samples[i]) <= 1e-6);
    }
  }
}

TEST_CASE("degenerate and infeasible designs") {
  auto identity = design_bank(1, 100.0, 512);
  CHECK(identity.num_bands() == 1);
  CHECK(identity.group_delay() == 0);
  auto x = gen_noise(333, 4, 0.5);
  auto bands = analyze(identity, x);
  CHECK(bands.frames == 333);
  auto y = synthesize(identity, bands);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y.samples[i] == doctest::Approx(x.samples[i]).epsilon(1e-6));

  CHECK_THROWS_AS(design_bank(16, 100.0, 64), ModelError);
  CHECK_THROWS_AS(design_bank(12, 100.0, 480), InputError);
  CHECK_THROWS_AS(design_bank(16, 100.0, 500), InputError);

  auto small = design_bank(4, 80.0, 128);
  CHECK(round_trip_snr_db(small, gen_noise(8192, 6, 0.3), 256) >= 50.0);
}

TEST_CASE("synthesis rejects band-count mismatch") {
  BandMatrix wrong(8, 10, 6000.0);
  CHECK_THROWS_AS(synthesize(default_bank(), wrong), InputError);
}
