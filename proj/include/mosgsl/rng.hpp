#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mosgsl {

using Rng = std::mt19937_64;

// Independent, reproducible stream for one consumer (weight init, dropout,
// shuffling, ...). Streams with different names never share state, so adding
// a component does not perturb the random draws of another.
Rng make_stream(std::uint64_t seed, std::string_view stream);

}  // namespace mosgsl

#include <span>
#include <utility>

namespace mosgsl {

// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Fisher-Yates shuffle with a fixed draw sequence (std::shuffle's algorithm is
// implementation-defined).
template <typename T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(items[i - 1], items[j < i ? j : i - 1]);
    }
}

// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

}  // namespace mosgsl
