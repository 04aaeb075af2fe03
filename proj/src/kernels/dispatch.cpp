#include <atomic>

#include "check.hpp"
#include "compfreeze/kernels.hpp"

namespace compfreeze::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::omp};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void gemm(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    backend() == Backend::omp ? omp::gemm(a, b, c, accumulate) : serial::gemm(a, b, c, accumulate);
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    backend() == Backend::omp ? omp::gemm_nt(a, b, c, accumulate) : serial::gemm_nt(a, b, c, accumulate);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    backend() == Backend::omp ? omp::gemm_tn(a, b, c, accumulate) : serial::gemm_tn(a, b, c, accumulate);
}

Matrix kron(const Matrix& a, const Matrix& b) { return backend() == Backend::omp ? omp::kron(a, b) : serial::kron(a, b); }

void add_row_bias(Matrix& out, const Matrix& bias) {
    detail::require(bias.size() == out.cols, "add_row_bias: bias length mismatch");
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* r = out.values.data() + i * out.cols;
        for (std::size_t j = 0; j < out.cols; ++j) r[j] += bias.values[j];
    }
}

void accumulate_column_sums(const Matrix& g, Matrix& bias_grad) {
    detail::require(bias_grad.size() == g.cols, "accumulate_column_sums: length mismatch");
    for (std::size_t i = 0; i < g.rows; ++i) {
        const double* r = g.values.data() + i * g.cols;
        for (std::size_t j = 0; j < g.cols; ++j) bias_grad.values[j] += r[j];
    }
}

}  // namespace compfreeze::kernels
