#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "srave/audio.hpp"
#include "srave/container.hpp"
#include "srave/error.hpp"
#include "srave/init.hpp"
#include "srave/nn.hpp"

using namespace srave;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Prng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(scale * rng.gauss());
  return t;
}

// Naive oracle for the tap convention: y[o,t] = b[o] + sum w[o,c,k] x[c, anchor(t) - k d].
Tensor naive_conv(const ConvSpec& s, const Tensor& w, const Tensor& b, const Tensor& x) {
  const std::size_t len = x.length();
  const std::size_t out_len = s.causal ? len / s.stride : (len + s.stride - 1) / s.stride;
  const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(s.lookback() / 2);
  Tensor y({s.out_channels, out_len});
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t t = 0; t < out_len; ++t) {
      const auto anchor = static_cast<std::ptrdiff_t>(t * s.stride) +
                          (s.causal ? static_cast<std::ptrdiff_t>(s.stride) - 1 : centre);
      double acc = b.data.empty() ? 0.0 : b.data[o];
      for (std::size_t c = 0; c < s.in_channels; ++c)
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const auto idx = anchor - static_cast<std::ptrdiff_t>(k * s.dilation);
          if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += static_cast<double>(w.data[(o * s.in_channels + c) * s.kernel + k]) *
                 x.at(c, static_cast<std::size_t>(idx));
        }
      y.at(o, t) = static_cast<float>(acc);
    }
  return y;
}

ConvSpec random_spec(Prng& rng, bool causal) {
  ConvSpec s;
  s.in_channels = 1 + rng.next_u64() % 6;
  s.out_channels = 1 + rng.next_u64() % 6;
  s.kernel = 1 + rng.next_u64() % 7;
  s.stride = 1 + rng.next_u64() % 4;
  s.dilation = 1 + rng.next_u64() % 4;
  s.causal = causal;
  return s;
}

}  // namespace

TEST_CASE("conv1d named examples") {
  SUBCASE("identity kernel") {
    ConvSpec s{1, 1, 1};
    Tensor x({1, 5}, {1, -2, 3, -4, 5});
    CHECK(conv1d(s, Tensor({1, 1, 1}, {1.0f}), Tensor({1}, {0.0f}), x) == x);
  }
  SUBCASE("unit delay") {
    ConvSpec s{1, 1, 2};
    Tensor x({1, 4}, {1, 2, 3, 4});
    auto y = conv1d(s, Tensor({1, 1, 2}, {0.0f, 1.0f}), Tensor(), x);
    CHECK(y.data == std::vector<float>{0, 1, 2, 3});
  }
  SUBCASE("stride shape law") {
    Prng rng(1);
    ConvSpec s{4, 3, 3, 2};
    auto y = conv1d(s, random_tensor(s.weight_shape(), rng), Tensor({3}), random_tensor({4, 64}, rng));
    CHECK(y.shape == std::vector<std::size_t>{3, 32});
  }
  SUBCASE("errors") {
    ConvSpec s{2, 1, 3, 2};
    Tensor w(s.weight_shape());
    CHECK_THROWS_AS(conv1d(s, w, Tensor(), Tensor({3, 8})), InputError);
    CHECK_THROWS_AS(conv1d(s, w, Tensor(), Tensor({2, 7})), InputError);
    CHECK_THROWS_AS(conv1d(s, Tensor({1, 2, 2}), Tensor(), Tensor({2, 8})), InputError);
    CHECK_THROWS_AS(conv1d(ConvSpec{2, 1, 0}, Tensor({1, 2, 0}), Tensor(), Tensor({2, 8})), InputError);
  }
}

TEST_CASE("conv1d matches the naive oracle") {
  Prng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const bool causal = trial % 2 == 0;
    auto s = random_spec(rng, causal);
    auto w = random_tensor(s.weight_shape(), rng, 0.5);
    auto b = random_tensor({s.out_channels}, rng);
    const std::size_t len = s.stride * (1 + rng.next_u64() % 30) + (causal ? 0 : rng.next_u64() % 3);
    auto x = random_tensor({s.in_channels, len}, rng);
    auto y = conv1d(s, w, b, x);
    auto ref = naive_conv(s, w, b, x);
    REQUIRE(y.shape == ref.shape);
    CHECK(max_abs_diff(y, ref) <= 1e-4f);
  }
}

TEST_CASE("conv1d linearity") {
  Prng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_spec(rng, true);
    auto w = random_tensor(s.weight_shape(), rng, 0.5);
    auto bias = random_tensor({s.out_channels}, rng);
    const std::size_t len = s.stride * 20;
    auto x = random_tensor({s.in_channels, len}, rng);
    auto y = random_tensor({s.in_channels, len}, rng);
    const float a = 0.7f, c = -1.3f;
    Tensor mix = x;
    for (std::size_t i = 0; i < mix.numel(); ++i) mix.data[i] = a * x.data[i] + c * y.data[i];
    auto lhs = conv1d(s, w, bias, mix);
    auto fx = conv1d(s, w, bias, x), fy = conv1d(s, w, bias, y);
    for (std::size_t o = 0; o < lhs.channels(); ++o)
      for (std::size_t t = 0; t < lhs.length(); ++t) {
        const float rhs = a * fx.at(o, t) + c * fy.at(o, t) + (1.0f - a - c) * bias.data[o];
        REQUIRE(std::fabs(lhs.at(o, t) - rhs) <= 1e-5f * (1.0f + std::fabs(rhs)));
      }
  }
}

TEST_CASE("cached-causal conv equals offline over random partitions") {
  Prng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    auto s = random_spec(rng, true);
    Conv1d layer(s, random_tensor(s.weight_shape(), rng, 0.5), random_tensor({s.out_channels}, rng));
    const std::size_t blocks = 1 + rng.next_u64() % 40;
    auto x = random_tensor({s.in_channels, blocks * s.stride}, rng);
    auto offline = layer.forward(x);

    std::vector<Tensor> parts;
    auto state = layer.initial_state();
    std::size_t pos = 0;
    const bool single_stride = trial % 4 == 0;
    while (pos < x.length()) {
      const std::size_t n = single_stride ? 1 : rng.next_u64() % 5;
      const std::size_t take = std::min(n * s.stride, x.length() - pos);
      parts.push_back(layer.forward(slice_time(x, pos, take), state));
      pos += take;
    }
    auto streamed = concat_time(parts);
    REQUIRE(streamed.shape == offline.shape);
    CHECK(max_abs_diff(streamed, offline) <= 1e-6f);
  }

  SUBCASE("empty chunk and errors") {
    ConvSpec s{2, 2, 3, 2};
    Conv1d layer(s, random_tensor(s.weight_shape(), rng), Tensor());
    auto state = layer.initial_state();
    layer.forward(random_tensor({2, 4}, rng), state);
    const auto before = state.cache;
    auto y = layer.forward(Tensor({2, 0}), state);
    CHECK(y.length() == 0);
    CHECK(state.cache == before);
    CHECK_THROWS_AS(layer.forward(Tensor({2, 3}), state), InputError);

    ConvSpec nc = s;
    nc.causal = false;
    Conv1d centred(nc, random_tensor(nc.weight_shape(), rng), Tensor());
    auto st = centred.initial_state();
    CHECK_THROWS_AS(centred.forward(Tensor({2, 4}), st), InputError);
  }
}

TEST_CASE("transposed conv") {
  SUBCASE("nearest-neighbour expansion") {
    ConvSpec s{1, 1, 2, 2};
    Tensor x({1, 2}, {3.0f, -5.0f});
    auto y = transposed_conv1d(s, Tensor({1, 1, 2}, {1.0f, 1.0f}), Tensor(), x);
    CHECK(y.data == std::vector<float>{3, 3, -5, -5});
  }
  SUBCASE("zero input gives bias") {
    ConvSpec s{2, 3, 8, 4};
    Prng rng(3);
    auto y = transposed_conv1d(s, random_tensor(s.weight_shape(), rng), Tensor({3}, {1, 2, 3}), Tensor({2, 5}));
    CHECK(y.shape == std::vector<std::size_t>{3, 20});
    for (std::size_t o = 0; o < 3; ++o)
      for (float v : y.row(o)) CHECK(v == static_cast<float>(o + 1));
  }
  SUBCASE("shape law, naive oracle and streaming") {
    Prng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      ConvSpec s;
      s.in_channels = 1 + rng.next_u64() % 5;
      s.out_channels = 1 + rng.next_u64() % 5;
      s.stride = 1 + rng.next_u64() % 4;
      s.kernel = 1 + rng.next_u64() % 9;
      auto w = random_tensor(s.weight_shape(), rng);
      auto b = random_tensor({s.out_channels}, rng);
      ConvTranspose1d layer(s, w, b);
      const std::size_t t = 1 + rng.next_u64() % 25;
      auto x = random_tensor({s.in_channels, t}, rng);
      auto y = layer.forward(x);
      REQUIRE(y.shape == std::vector<std::size_t>{s.out_channels, t * s.stride});

      Tensor ref({s.out_channels, t * s.stride});
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        for (std::size_t n = 0; n < t * s.stride; ++n) ref.at(o, n) = b.data[o];
        for (std::size_t c = 0; c < s.in_channels; ++c)
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t k = 0; k < s.kernel; ++k) {
              const std::size_t n = i * s.stride + k;
              if (n < t * s.stride) ref.at(o, n) += w.data[(o * s.in_channels + c) * s.kernel + k] * x.at(c, i);
            }
      }
      CHECK(max_abs_diff(y, ref) <= 1e-4f);

      std::vector<Tensor> parts;
      auto state = layer.initial_state();
      std::size_t pos = 0;
      while (pos < t) {
        const std::size_t take = std::min<std::size_t>(rng.next_u64() % 4, t - pos);
        parts.push_back(layer.forward(slice_time(x, pos, take), state));
        pos += take;
      }
      auto streamed = concat_time(parts);
      REQUIRE(streamed.shape == y.shape);
      CHECK(max_abs_diff(streamed, y) <= 1e-5f);
    }
  }
}

TEST_CASE("conv2d matches a naive oracle") {
  Prng rng(12);
  Conv2dSpec s{2, 3, 5, 3, 2, 1};
  auto w = random_tensor(s.weight_shape(), rng);
  auto b = random_tensor({3}, rng);
  auto x = random_tensor({2, 11, 4}, rng);
  auto y = Conv2d(s, w, b).forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{3, 6, 4});
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double acc = b.data[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t ki = 0; ki < 5; ++ki)
            for (std::size_t kj = 0; kj < 3; ++kj) {
              const long yy = static_cast<long>(i * 2 + ki) - 2, xx = static_cast<long>(j + kj) - 1;
              if (yy < 0 || yy >= 11 || xx < 0 || xx >= 4) continue;
              acc += w.data[((o * 2 + c) * 5 + ki) * 3 + kj] * x.data[(c * 11 + static_cast<std::size_t>(yy)) * 4 + static_cast<std::size_t>(xx)];
            }
        REQUIRE(y.data[(o * 6 + i) * 4 + j] == doctest::Approx(acc).epsilon(1e-5).scale(1e-5));
      }
}

TEST_CASE("activations and normalization") {
  Tensor x({1, 3}, {-1.0f, 3.0f, 0.0f});
  CHECK(leaky_relu(x).data == std::vector<float>{-0.2f, 3.0f, 0.0f});
  CHECK(leaky_relu(x, 0.0f).data == std::vector<float>{0.0f, 3.0f, 0.0f});

  Prng rng(4);
  auto v = random_tensor({3, 16}, rng);
  std::vector<float> zeros(3, 0.0f), ones(3, 1.0f);
  CHECK(batchnorm_apply(v, zeros, ones, ones, zeros, 0.0f) == v);

  std::vector<float> mean{1.0f, -2.0f, 0.5f}, bias{0.25f, 0.5f, -1.0f};
  Tensor constant({3, 4});
  for (std::size_t c = 0; c < 3; ++c)
    for (float& e : constant.row(c)) e = mean[c];
  auto out = batchnorm_apply(constant, mean, std::vector<float>{4, 2, 9}, ones, bias, 1e-5f);
  for (std::size_t c = 0; c < 3; ++c)
    for (float e : out.row(c)) CHECK(e == bias[c]);

  std::vector<float> twos(3, 2.0f);
  auto affine = batchnorm_apply(v, zeros, ones, twos, ones, 0.0f);
  for (std::size_t i = 0; i < v.numel(); ++i) CHECK(affine.data[i] == doctest::Approx(2 * v.data[i] + 1));

  CHECK_THROWS_AS(batchnorm_apply(v, std::vector<float>(2), ones, ones, zeros, 0.0f), InputError);
}

TEST_CASE("film") {
  Tensor x({1, 2}, {1.0f, 2.0f});
  CHECK(film_apply(x, FiLMParams{{2.0f}, {-1.0f}}).data == std::vector<float>{1.0f, 3.0f});

  Prng rng(10);
  auto v = random_tensor({4, 32}, rng);
  CHECK(film_apply(v, FiLMParams{std::vector<float>(4, 1.0f), std::vector<float>(4, 0.0f)}) == v);
  auto flat = film_apply(v, FiLMParams{std::vector<float>(4, 0.0f), {1, 2, 3, 4}});
  for (std::size_t c = 0; c < 4; ++c)
    for (float e : flat.row(c)) CHECK(e == static_cast<float>(c + 1));

  // Inverse modulation restores the input.
  for (int trial = 0; trial < 20; ++trial) {
    FiLMParams p, inv;
    for (int c = 0; c < 4; ++c) {
      float g = static_cast<float>(rng.uniform(0.2, 3.0)) * (rng.uniform() < 0.5 ? -1.0f : 1.0f);
      float b = static_cast<float>(rng.gauss());
      p.gamma.push_back(g);
      p.beta.push_back(b);
      inv.gamma.push_back(1.0f / g);
      inv.beta.push_back(-b / g);
    }
    auto back = film_apply(film_apply(v, p), inv);
    CHECK(max_abs_diff(back, v) <= 1e-5f);
  }
  CHECK_THROWS_AS(film_apply(v, FiLMParams{{1.0f}, {0.0f}}), InputError);
}

TEST_CASE("weight container") {
  const auto path = fs::temp_directory_path() / "srave_test_container.srav";
  Prng rng(17);
  WeightContainer c;
  c.put("enc.conv0.weight", random_tensor({8, 5, 7}, rng));
  c.put("scalar", random_tensor({1}, rng));
  c.put("empty", Tensor({0}));
  c.put_text("__config__", "latent_dim=64\n");
  save_container(c, path);
  auto back = load_container(path);
  CHECK(back == c);
  CHECK(back.get_text("__config__") == "latent_dim=64\n");
  CHECK_THROWS_AS(c.put("scalar", Tensor({1})), ContainerError);

  auto bytes = serialize_container(c);
  auto expect_kind = [](const std::vector<char>& b, ContainerError::Kind kind) {
    try {
      parse_container(b);
      FAIL("expected failure");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == kind);
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_kind(bad_magic, ContainerError::Kind::BadMagic);
  auto bad_version = bytes;
  bad_version[4] = 9;
  expect_kind(bad_version, ContainerError::Kind::VersionMismatch);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  expect_kind(truncated, ContainerError::Kind::Truncated);
  expect_kind(std::vector<char>(bytes.begin(), bytes.begin() + 10), ContainerError::Kind::Truncated);

  WeightContainer dup;
  dup.put("a", Tensor({1}));
  dup.put("b", Tensor({1}));
  auto dup_bytes = serialize_container(dup);
  // Rename "b" to "a" in place.
  for (std::size_t i = 12; i < dup_bytes.size(); ++i)
    if (dup_bytes[i] == 'b') dup_bytes[i] = 'a';
  expect_kind(dup_bytes, ContainerError::Kind::DuplicateName);
  fs::remove(path);
}

TEST_CASE("init_random") {
  std::vector<ParamSpec> specs{{"w", {256, 512, 3}, Init::Kaiming, 512 * 3},
                               {"b", {256}, Init::Zeros},
                               {"g", {16}, Init::Ones}};
  auto a = init_random(specs, 1), b = init_random(specs, 1), c = init_random(specs, 2);
  CHECK(a == b);
  CHECK_FALSE(a.get("w") == c.get("w"));
  CHECK(a.get("b").data == std::vector<float>(256, 0.0f));
  CHECK(a.get("g").data == std::vector<float>(16, 1.0f));

  const auto& w = a.get("w").data;
  double sum = 0.0, sq = 0.0;
  for (float v : w) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(2.0 / (512 * 3)).epsilon(0.2));
}
