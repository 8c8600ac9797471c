#include "srave/init.hpp"

#include <algorithm>
#include <cmath>

#include "srave/audio.hpp"

namespace srave {

WeightContainer init_random(std::span<const ParamSpec> specs, std::uint64_t seed) {
  Prng rng(seed);
  WeightContainer out;
  for (const auto& spec : specs) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case Init::Zeros:
        break;
      case Init::Ones:
        std::fill(t.data.begin(), t.data.end(), 1.0f);
        break;
      case Init::FilmIdentity:
        std::fill(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(t.numel() / 2), 1.0f);
        break;
      case Init::Kaiming: {
        const double stddev = spec.gain * std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(spec.fan_in, 1)));
        for (float& v : t.data) v = static_cast<float>(stddev * rng.gauss());
        break;
      }
    }
    out.put(spec.name, std::move(t));
  }
  return out;
}

}  // namespace srave
