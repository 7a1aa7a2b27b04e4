#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedcap {

using Rng = std::mt19937_64;

/// Independent random streams derived from one root seed. Each sub-seed is
/// splitmix64(root ^ splitmix64(stream) + index), so a stream's values
/// depend only on (root, stream, index).
enum class Stream : std::uint64_t {
    data = 1,
    partition = 2,
    init = 3,
    sampling = 4,
    batching = 5,
    attack = 6,
    root_shard = 7,
    bucketing = 8,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index = 0) noexcept;
std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index,
                          std::uint64_t sub) noexcept;

/// Uniform double in [0,1) and standard normal draws that do not depend on
/// the standard library's distribution implementations.
double uniform01(Rng& rng) noexcept;
double standard_normal(Rng& rng) noexcept;

/// Fisher-Yates with our own index draws.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace fedcap
