#pragma once

#include <stdexcept>
#include <string>

#include "compfreeze/tensor.hpp"

namespace compfreeze::kernels::detail {

inline void prepare_output(Matrix& c, std::size_t rows, std::size_t cols, bool accumulate, const char* what) {
    if (accumulate) {
        if (c.rows != rows || c.cols != cols) {
            throw std::invalid_argument(std::string(what) + ": accumulate target has shape " + c.shape_string());
        }
    } else if (c.rows != rows || c.cols != cols) {
        c = Matrix(rows, cols);
    } else {
        c.fill(0.0);
    }
}

inline void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace compfreeze::kernels::detail
