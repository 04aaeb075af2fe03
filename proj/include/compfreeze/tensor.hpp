#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace compfreeze {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != r * c) {
            throw std::invalid_argument("Matrix: value count does not match shape");
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        values.reserve(rows * cols);
        for (const auto& r : init) {
            if (r.size() != cols) throw std::invalid_argument("Matrix: ragged initializer");
            values.insert(values.end(), r.begin(), r.end());
        }
    }

    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : values) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }

    std::string shape_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

inline Matrix operator+(Matrix a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("Matrix add: shape mismatch");
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] += b.values[i];
    return a;
}

inline Matrix operator*(double s, Matrix a) {
    for (double& v : a.values) v *= s;
    return a;
}

/// max |a-b| / max(|b|, floor)
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-300) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_relative_error: shape mismatch");
    double scale = floor;
    double diff = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        scale = std::max(scale, std::abs(b.values[i]));
        diff = std::max(diff, std::abs(a.values[i] - b.values[i]));
    }
    return diff / scale;
}

}  // namespace compfreeze
