#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "compfreeze/param.hpp"
#include "compfreeze/tensor.hpp"

namespace compfreeze {

/// Shape of a PHM (parameterized hypercomplex multiplication) linear map
/// k -> d whose weight is a sum of n Kronecker products.
struct PhmSpec {
    std::size_t n = 4;
    std::size_t in_dim = 0;   // k
    std::size_t out_dim = 0;  // d
    std::size_t rank = 1;
    double init_range = 1e-4;

    void validate() const;
    std::size_t in_block() const { return in_dim / n; }
    std::size_t out_block() const { return out_dim / n; }
};

/// Factors of one PHM layer. W = sum_i A_i (x) (s_i t_i).
///
/// `shared_a` points at tensors owned by a registry and may be referenced by
/// many layers; gradients from every user accumulate into the same buffers.
struct FactorSet {
    std::vector<ParamPtr> shared_a;  // n tensors, n x n
    std::vector<ParamPtr> s;         // n tensors, (k/n) x r
    std::vector<ParamPtr> t;         // n tensors, r x (d/n)
    ParamPtr bias;                   // 1 x d

    std::vector<ParamPtr> owned() const;  // s, t and bias (not shared_a)
};

struct ParamCount {
    std::size_t shared = 0;
    std::size_t per_layer = 0;
    std::size_t total() const { return shared + per_layer; }
};

Matrix kronecker_product(const Matrix& a, const Matrix& b);

/// Allocates A_1..A_n with entries uniform in [-init_range, init_range].
std::vector<ParamPtr> make_shared_a(std::size_t n, double init_range, std::mt19937_64& rng, const std::string& prefix);

/// Allocates s/t/bias for `spec` and binds them to `shared_a`. s and t are
/// drawn N(0, s_std^2) / N(0, t_std^2); a zero std gives exact zeros.
FactorSet make_factors(const PhmSpec& spec, std::vector<ParamPtr> shared_a, std::mt19937_64& rng,
                       const std::string& prefix, double s_std = 1e-2, double t_std = 1e-2);

void check_factors(const PhmSpec& spec, const FactorSet& factors);

/// Materialized weight, k x d.
Matrix phm_compose(const PhmSpec& spec, const FactorSet& factors);

/// y = x W + b for each row of x, without materializing W.
Matrix phm_forward(const Matrix& x, const PhmSpec& spec, const FactorSet& factors);

/// Backward of phm_forward. Adds dL/d(factor) into each factor's grad buffer
/// when that factor is trainable and returns dL/dx.
Matrix phm_backward(const Matrix& x, const Matrix& dy, const PhmSpec& spec, const FactorSet& factors);

ParamCount phm_param_count(const PhmSpec& spec, bool count_shared_a);

}  // namespace compfreeze
