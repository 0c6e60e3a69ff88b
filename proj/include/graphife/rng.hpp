#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace graphife {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream for (seed, index, purpose). Same arguments give the same stream.
Rng derive_rng(std::uint64_t seed, std::uint64_t index, std::string_view purpose);

/// Beta(a, b) via two gamma draws.
double sample_beta(Rng& rng, double a, double b);

}  // namespace graphife
