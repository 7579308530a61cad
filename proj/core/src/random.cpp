#include "mbp/random.hpp"

namespace mbp {

std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double uniform01(std::uint64_t seed, std::uint64_t index) {
    return static_cast<double>(splitmix64(seed, index) >> 11) * 0x1.0p-53;
}

std::vector<double> uniform_field(std::size_t n, double r, std::uint64_t seed) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = r * (2.0 * uniform01(seed, i) - 1.0);
    return v;
}

}  // namespace mbp
