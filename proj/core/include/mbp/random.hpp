#pragma once

#include <cstdint>
#include <vector>

namespace mbp {

/// SplitMix64 finalizer applied to seed + (index + 1) * 0x9E3779B97F4A7C15.
std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t index);

/// Uniform double in [0, 1) from the top 53 bits of splitmix64(seed, index).
double uniform01(std::uint64_t seed, std::uint64_t index);

/// Node i receives r (2 U_i - 1) with U_i = uniform01(seed, i).
std::vector<double> uniform_field(std::size_t n, double r, std::uint64_t seed);

}  // namespace mbp
