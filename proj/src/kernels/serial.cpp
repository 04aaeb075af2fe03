#include "check.hpp"
#include "compfreeze/kernels.hpp"

namespace compfreeze::kernels::serial {

using detail::prepare_output;
using detail::require;

void gemm(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    require(a.cols == b.rows, "gemm: inner dimension mismatch");
    prepare_output(c, a.rows, b.cols, accumulate, "gemm");
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = c(i, j);
            for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    require(a.cols == b.cols, "gemm_nt: inner dimension mismatch");
    prepare_output(c, a.rows, b.rows, accumulate, "gemm_nt");
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
            double s = c(i, j);
            for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    require(a.rows == b.rows, "gemm_tn: inner dimension mismatch");
    prepare_output(c, a.cols, b.cols, accumulate, "gemm_tn");
    for (std::size_t i = 0; i < a.cols; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = c(i, j);
            for (std::size_t k = 0; k < a.rows; ++k) s += a(k, i) * b(k, j);
            c(i, j) = s;
        }
    }
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows * b.rows, a.cols * b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            for (std::size_t u = 0; u < b.rows; ++u)
                for (std::size_t v = 0; v < b.cols; ++v) out(i * b.rows + u, j * b.cols + v) = a(i, j) * b(u, v);
    return out;
}

}  // namespace compfreeze::kernels::serial
