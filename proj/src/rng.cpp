#include "fedcap/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace fedcap {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index) noexcept {
    return splitmix64((root ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index,
                          std::uint64_t sub) noexcept {
    return splitmix64(derive_seed(root, stream, index) + sub);
}

double uniform01(Rng& rng) noexcept {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) noexcept {
    // Box-Muller; the 1-u keeps log away from zero.
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p, rng);
    return p;
}

}  // namespace fedcap
