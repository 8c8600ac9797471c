#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srave/container.hpp"

namespace srave {

/// FilmIdentity fills the first half with ones and the second with zeros, the
/// bias of a [gamma | beta] layer that starts as the identity modulation.
enum class Init { Kaiming, Zeros, Ones, FilmIdentity };

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  Init init = Init::Kaiming;
  std::size_t fan_in = 1;
  double gain = 1.0;  ///< multiplies the Kaiming standard deviation
};

/// Kaiming-normal draws, N(0, gain^2 * 2 / fan_in), from one SplitMix64 stream in spec
/// order; zeros/ones initializers consume no randomness.
WeightContainer init_random(std::span<const ParamSpec> specs, std::uint64_t seed);

}  // namespace srave
