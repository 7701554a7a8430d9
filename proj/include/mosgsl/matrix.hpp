#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mosgsl {

// Plain row-major dense matrix of doubles. Used for data that never needs
// gradients (features, raw adjacency, motif vectors, checkpoints).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool operator==(const Matrix&) const = default;
};

std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace mosgsl
