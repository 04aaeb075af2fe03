#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "compfreeze/param.hpp"
#include "compfreeze/tensor.hpp"

namespace testing {

using compfreeze::Matrix;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(r, c);
    for (double& v : m.values) v = d(rng);
    return m;
}

// Independent nested-loop Kronecker product.
inline Matrix kron_oracle(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows * b.rows, a.cols * b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            for (std::size_t u = 0; u < b.rows; ++u)
                for (std::size_t v = 0; v < b.cols; ++v) out.values[(i * b.rows + u) * out.cols + j * b.cols + v] = a.values[i * a.cols + j] * b.values[u * b.cols + v];
    return out;
}

inline Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a.values[i * a.cols + k] * b.values[k * b.cols + j];
            out.values[i * out.cols + j] = s;
        }
    return out;
}

inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double floor = 1e-6) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) <= rel * scale;
}

// Central difference of `loss` with respect to every entry of `p`. Returns the
// worst |a-f|/max(|a|,|f|,floor) over the entries.
inline double worst_fd_error(compfreeze::Parameter& p, const std::function<double()>& loss, double step = 1e-5,
                             double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.value.values.size(); ++i) {
        const double keep = p.value.values[i];
        p.value.values[i] = keep + step;
        const double up = loss();
        p.value.values[i] = keep - step;
        const double down = loss();
        p.value.values[i] = keep;
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = p.grad.values[i];
        const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic - numeric) / scale);
    }
    return worst;
}

inline double weighted_sum(const Matrix& y, const Matrix& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.values.size(); ++i) s += y.values[i] * w.values[i];
    return s;
}

}  // namespace testing
