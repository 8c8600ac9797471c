#include "srave/audio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <string>

#include "srave/error.hpp"

namespace srave {

double Prng::gauss() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::pair<std::uint64_t, std::uint64_t> prng_next_u64(std::uint64_t state) {
  Prng p(state);
  const auto v = p.next_u64();
  return {v, p.state()};
}

std::pair<double, std::uint64_t> prng_gauss(std::uint64_t state) {
  Prng p(state);
  const double v = p.gauss();
  return {v, p.state()};
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioBuffer load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError(path.string() + ": malformed header (not RIFF/WAVE)");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw InputError(path.string() + ": malformed fmt chunk");
      format = read_le<std::uint16_t>(chunk + 8);
      channels = read_le<std::uint16_t>(chunk + 10);
      rate = read_le<std::uint32_t>(chunk + 12);
      bits = read_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (avail < 26) throw InputError(path.string() + ": malformed extensible fmt");
        format = read_le<std::uint16_t>(chunk + 32);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || channels == 0 || rate == 0) {
    throw InputError(path.string() + ": malformed header (missing fmt)");
  }
  const bool pcm = format == kFormatPcm && (bits == 16 || bits == 24);
  const bool flt = format == kFormatFloat && bits == 32;
  if (!pcm && !flt) {
    throw InputError(path.string() + ": unsupported codec (format " +
                     std::to_string(format) + ", " + std::to_string(bits) +
                     " bits)");
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  if (data == nullptr || data_size < frame_bytes) {
    throw InputError(path.string() + ": empty data chunk");
  }
  if (channels > 1) {
    std::cerr << "warning: " << path.string() << " has " << channels
              << " channels; using channel 0\n";
  }

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  const std::size_t frames = data_size / frame_bytes;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    if (flt) {
      out.samples[i] = read_le<float>(p);
    } else if (bits == 16) {
      out.samples[i] = static_cast<float>(read_le<std::int16_t>(p) / 32768.0);
    } else {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      out.samples[i] = static_cast<float>(v / 8388608.0);
    }
  }
  return out;
}

void save_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
              WavFormat format) {
  if (buffer.empty()) throw InputError("save_wav: empty buffer");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());

  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::Pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(buffer.size() * (bits / 8));

  os.write("RIFF", 4);
  write_le<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le<std::uint32_t>(os, 16);
  write_le<std::uint16_t>(os, tag);
  write_le<std::uint16_t>(os, 1);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(buffer.sample_rate));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(buffer.sample_rate) * (bits / 8));
  write_le<std::uint16_t>(os, bits / 8);
  write_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  write_le<std::uint32_t>(os, data_bytes);

  if (format == WavFormat::Float32) {
    os.write(reinterpret_cast<const char*>(buffer.samples.data()), data_bytes);
  } else {
    std::vector<std::int16_t> pcm(buffer.size());
    std::transform(buffer.samples.begin(), buffer.samples.end(), pcm.begin(),
                   [](float s) {
                     const double v = std::round(static_cast<double>(s) * 32768.0);
                     return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
                   });
    os.write(reinterpret_cast<const char*>(pcm.data()), data_bytes);
  }
  if (!os) throw InputError("write failed: " + path.string());
}

AudioBuffer gen_sine(double freq, double duration, int sample_rate,
                     double amplitude) {
  if (sample_rate <= 0) throw InputError("gen_sine: sample rate must be positive");
  if (!(freq > 0.0) || freq >= sample_rate / 2.0) {
    throw InputError("gen_sine: frequency must lie in (0, Nyquist)");
  }
  AudioBuffer out;
  out.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  out.samples.resize(n);
  const double w = 2.0 * std::numbers::pi * freq / sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(amplitude * std::sin(w * static_cast<double>(i)));
  }
  return out;
}

AudioBuffer gen_noise(std::size_t length, std::uint64_t seed, double stddev,
                      int sample_rate) {
  Prng rng(seed);
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(length);
  for (auto& s : out.samples) s = static_cast<float>(stddev * rng.gauss());
  return out;
}

void require_engine_rate(const AudioBuffer& buffer) {
  if (buffer.sample_rate != kEngineSampleRate) {
    throw InputError("sample rate " + std::to_string(buffer.sample_rate) +
                     " Hz unsupported; expected " +
                     std::to_string(kEngineSampleRate) + " Hz");
  }
}

double rms(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double peak(std::span<const float> x) {
  double m = 0.0;
  for (float v : x) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

}  // namespace srave
