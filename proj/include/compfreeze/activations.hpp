#pragma once

#include <cmath>
#include <numbers>

#include "compfreeze/tensor.hpp"

namespace compfreeze {

enum class Nonlinearity { gelu, relu };

// exact (erf) GELU
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
    const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return cdf + x * pdf;
}

inline double activate(Nonlinearity f, double x) { return f == Nonlinearity::gelu ? gelu(x) : (x > 0.0 ? x : 0.0); }

inline double activate_grad(Nonlinearity f, double x) {
    return f == Nonlinearity::gelu ? gelu_grad(x) : (x > 0.0 ? 1.0 : 0.0);
}

inline Matrix apply(Nonlinearity f, const Matrix& x) {
    Matrix y = x;
    for (double& v : y.values) v = activate(f, v);
    return y;
}

// dx = dy * f'(pre)
inline Matrix apply_grad(Nonlinearity f, const Matrix& pre, const Matrix& dy) {
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.values.size(); ++i) dx.values[i] *= activate_grad(f, pre.values[i]);
    return dx;
}

}  // namespace compfreeze
