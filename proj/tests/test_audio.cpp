#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "srave/audio.hpp"
#include "srave/error.hpp"

namespace fs = std::filesystem;
using namespace srave;

namespace {

// Reference SplitMix64 (Steele, Lea & Flood), written out independently.
std::uint64_t reference_splitmix(std::uint64_t& x) {
  std::uint64_t z = (x += UINT64_C(0x9e3779b97f4a7c15));
  z = (z ^ (z >> 30)) * UINT64_C(0xbf58476d1ce4e5b9);
  z = (z ^ (z >> 27)) * UINT64_C(0x94d049bb133111eb);
  return z ^ (z >> 31);
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("srave_test_audio_" + name);
}

// Writes a minimal mono PCM/float WAV from raw little-endian payload bytes.
void write_raw_wav(const fs::path& path, std::uint16_t format, std::uint16_t bits,
                   std::uint16_t channels, const std::vector<unsigned char>& payload) {
  std::ofstream os(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  os.write("RIFF", 4);
  u32(36 + static_cast<std::uint32_t>(payload.size()));
  os.write("WAVEfmt ", 8);
  u32(16);
  u16(format);
  u16(channels);
  u32(48000);
  u32(48000u * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  os.write("data", 4);
  u32(static_cast<std::uint32_t>(payload.size()));
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

TEST_CASE("splitmix64 matches the reference algorithm") {
  Prng rng(0);
  CHECK(rng.next_u64() == UINT64_C(0xE220A8397B1DCDAF));

  for (std::uint64_t seed : {UINT64_C(0), UINT64_C(1), UINT64_C(0xDEADBEEF), ~UINT64_C(0)}) {
    std::uint64_t ref_state = seed;
    std::uint64_t state = seed;
    for (int i = 0; i < 1000; ++i) {
      auto [v, next] = prng_next_u64(state);
      REQUIRE(v == reference_splitmix(ref_state));
      state = next;
    }
  }
}

TEST_CASE("prng is deterministic per seed") {
  Prng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    differs |= va != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("gaussian draws have unit moments") {
  Prng rng(7);
  constexpr int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gauss();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);

  auto [g1, s1] = prng_gauss(99);
  auto [g2, s2] = prng_gauss(99);
  CHECK(g1 == g2);
  CHECK(s1 == s2);
}

TEST_CASE("gen_sine") {
  auto s = gen_sine(1000, 1.0, 48000, 1.0);
  CHECK(s.size() == 48000);
  CHECK(s.samples[0] == 0.0f);

  auto q = gen_sine(12000, 0.01, 48000, 1.0);
  CHECK(q.samples[1] == doctest::Approx(1.0).epsilon(1e-7));

  CHECK_THROWS_AS(gen_sine(25000, 1.0, 48000, 1.0), InputError);
  CHECK_THROWS_AS(gen_sine(24000, 1.0, 48000, 1.0), InputError);

  // 1 kHz at 48 kHz: 48 samples per period, 1000 full periods.
  for (double a : {0.3, 1.0}) {
    auto x = gen_sine(1000, 1.0, 48000, a);
    double ms = 0.0;
    for (float v : x.samples) ms += static_cast<double>(v) * v;
    ms /= static_cast<double>(x.size());
    CHECK(ms == doctest::Approx(a * a / 2).epsilon(1e-6));
  }
}

TEST_CASE("wav 16-bit decoding") {
  const auto path = temp_path("pcm16.wav");
  std::vector<unsigned char> payload;
  for (std::int16_t v : {std::int16_t{16384}, std::int16_t{-32768}, std::int16_t{0}}) {
    payload.push_back(static_cast<unsigned char>(v & 0xFF));
    payload.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
  }
  write_raw_wav(path, 1, 16, 1, payload);
  auto b = load_wav(path);
  CHECK(b.sample_rate == 48000);
  REQUIRE(b.size() == 3);
  CHECK(b.samples[0] == 0.5f);
  CHECK(b.samples[1] == -1.0f);
  CHECK(b.samples[2] == 0.0f);
  fs::remove(path);
}

TEST_CASE("wav 24-bit and multichannel decoding") {
  const auto path = temp_path("pcm24.wav");
  // Two stereo frames: (0.5, 0.25), (-1.0, 0.0). Channel 0 is kept.
  auto push24 = [](std::vector<unsigned char>& out, std::int32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
  };
  std::vector<unsigned char> payload;
  push24(payload, 4194304);
  push24(payload, 2097152);
  push24(payload, -8388608);
  push24(payload, 0);
  write_raw_wav(path, 1, 24, 2, payload);
  auto b = load_wav(path);
  REQUIRE(b.size() == 2);
  CHECK(b.samples[0] == 0.5f);
  CHECK(b.samples[1] == -1.0f);
  fs::remove(path);
}

TEST_CASE("wav float round trip is lossless") {
  const auto path = temp_path("f32.wav");
  AudioBuffer x{48000, {0.25f, -0.25f}};
  save_wav(x, path, WavFormat::Float32);
  auto y = load_wav(path);
  CHECK(y.samples == x.samples);

  auto noise = gen_noise(4096, 3, 0.5);
  noise.samples.push_back(3.75f);  // out of nominal range is still finite
  save_wav(noise, path, WavFormat::Float32);
  CHECK(load_wav(path).samples == noise.samples);
  fs::remove(path);
}

TEST_CASE("wav 16-bit encoding and clipping") {
  const auto path = temp_path("enc16.wav");
  AudioBuffer x{48000, {0.5f, 1.0f, -1.0f, -2.0f}};
  save_wav(x, path, WavFormat::Pcm16);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  auto sample = [&](int i) {
    return static_cast<std::int16_t>(bytes[44 + 2 * i] | (bytes[45 + 2 * i] << 8));
  };
  CHECK(sample(0) == 16384);
  CHECK(sample(1) == 32767);
  CHECK(sample(2) == -32768);
  CHECK(sample(3) == -32768);

  auto noise = gen_noise(2048, 11, 0.3);
  save_wav(noise, path, WavFormat::Pcm16);
  auto back = load_wav(path);
  REQUIRE(back.size() == noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i) {
    if (std::fabs(noise.samples[i]) < 0.99f) {
      REQUIRE(std::fabs(back.samples[i] - noise.samples[i]) <= 1.0 / 32768.0);
    }
  }
  fs::remove(path);
}

TEST_CASE("wav error paths") {
  const auto path = temp_path("bad.wav");
  {
    std::ofstream os(path, std::ios::binary);
    os << "RIFX0000WAVE";
  }
  CHECK_THROWS_AS(load_wav(path), InputError);

  write_raw_wav(path, 1, 8, 1, {1, 2, 3});
  CHECK_THROWS_WITH_AS(load_wav(path), doctest::Contains("unsupported codec"), InputError);

  write_raw_wav(path, 1, 16, 1, {});
  CHECK_THROWS_WITH_AS(load_wav(path), doctest::Contains("empty data"), InputError);

  CHECK_THROWS_AS(save_wav(AudioBuffer{}, path), InputError);
  CHECK_THROWS_AS(load_wav(temp_path("does_not_exist.wav")), InputError);
  fs::remove(path);
}

TEST_CASE("engine rate guard") {
  CHECK_NOTHROW(require_engine_rate(AudioBuffer{48000, {}}));
  CHECK_THROWS_AS(require_engine_rate(AudioBuffer{44100, {}}), InputError);
}
