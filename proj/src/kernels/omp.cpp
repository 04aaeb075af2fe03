#include <omp.h>

#include "check.hpp"
#include "compfreeze/kernels.hpp"

// Row-parallel kernels. Each output element is owned by one thread and its
// inner sum runs over k in ascending order, matching the serial reference.
namespace compfreeze::kernels::omp {

using detail::prepare_output;
using detail::require;

namespace {
// below this many multiply-adds the fork/join costs more than it saves
constexpr std::size_t kParallelThreshold = 1 << 15;
}

void gemm(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    require(a.cols == b.rows, "gemm: inner dimension mismatch");
    prepare_output(c, a.rows, b.cols, accumulate, "gemm");
    const std::size_t m = a.rows, n = b.cols, kk = a.cols;
    const double* pa = a.values.data();
    const double* pb = b.values.data();
    double* pc = c.values.data();
#pragma omp parallel for schedule(static) if (m * n * kk > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* crow = pc + i * n;
        const double* arow = pa + i * kk;
        for (std::size_t k = 0; k < kk; ++k) {
            const double aik = arow[k];
            const double* brow = pb + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    require(a.cols == b.cols, "gemm_nt: inner dimension mismatch");
    prepare_output(c, a.rows, b.rows, accumulate, "gemm_nt");
    const std::size_t m = a.rows, n = b.rows, kk = a.cols;
    const double* pa = a.values.data();
    const double* pb = b.values.data();
    double* pc = c.values.data();
#pragma omp parallel for schedule(static) if (m * n * kk > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        const double* arow = pa + i * kk;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = pb + j * kk;
            double s = pc[i * n + j];
            for (std::size_t k = 0; k < kk; ++k) s += arow[k] * brow[k];
            pc[i * n + j] = s;
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    require(a.rows == b.rows, "gemm_tn: inner dimension mismatch");
    prepare_output(c, a.cols, b.cols, accumulate, "gemm_tn");
    const std::size_t m = a.cols, n = b.cols, kk = a.rows;
    const double* pa = a.values.data();
    const double* pb = b.values.data();
    double* pc = c.values.data();
#pragma omp parallel for schedule(static) if (m * n * kk > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* crow = pc + i * n;
        for (std::size_t k = 0; k < kk; ++k) {
            const double aki = pa[k * m + i];
            const double* brow = pb + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows * b.rows, a.cols * b.cols);
    const std::size_t out_cols = out.cols;
#pragma omp parallel for schedule(static) if (out.size() > kParallelThreshold)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(out.rows); ++r) {
        const std::size_t i = r / b.rows, u = r % b.rows;
        double* orow = out.values.data() + r * out_cols;
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double aij = a(i, j);
            for (std::size_t v = 0; v < b.cols; ++v) orow[j * b.cols + v] = aij * b(u, v);
        }
    }
    return out;
}

}  // namespace compfreeze::kernels::omp
