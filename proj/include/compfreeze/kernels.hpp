#pragma once

#include "compfreeze/tensor.hpp"

// Dense kernels used by the PHM layers and the host encoder.
//
// Two implementations exist: `serial` is the plain reference kept for tests,
// `omp` parallelises over output rows. Both accumulate every output element in
// the same order, so their results are bit-identical.
namespace compfreeze::kernels {

enum class Backend { serial, omp };

void set_backend(Backend b);
Backend backend();

// c (+)= a * b
void gemm(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c (+)= a * b^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c (+)= a^T * b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
Matrix kron(const Matrix& a, const Matrix& b);
// out[i, :] += bias for every row
void add_row_bias(Matrix& out, const Matrix& bias);
// bias_grad += column sums of g
void accumulate_column_sums(const Matrix& g, Matrix& bias_grad);

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
Matrix kron(const Matrix& a, const Matrix& b);
}  // namespace serial

namespace omp {
void gemm(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
Matrix kron(const Matrix& a, const Matrix& b);
}  // namespace omp

}  // namespace compfreeze::kernels
