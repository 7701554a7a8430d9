#include "mosgsl/matrix.hpp"
#include "mosgsl/error.hpp"
#include "mosgsl/rng.hpp"

#include <cmath>

namespace mosgsl {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
        throw ContractViolation("Matrix: " + std::to_string(data.size()) + " values for shape " +
                                shape_string(r, c));
    }
}

std::string shape_string(std::size_t rows, std::size_t cols) {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::string_view stream) {
    // FNV-1a over the stream name, mixed with the seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : stream) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return Rng(splitmix64(splitmix64(seed) ^ h));
}

}  // namespace mosgsl

namespace mosgsl {

double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace mosgsl
