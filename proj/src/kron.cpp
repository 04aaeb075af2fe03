#include "compfreeze/kron.hpp"

#include <stdexcept>

#include "compfreeze/kernels.hpp"

namespace compfreeze {

void PhmSpec::validate() const {
    if (n == 0 || in_dim == 0 || out_dim == 0) throw std::invalid_argument("PhmSpec: dimensions must be positive");
    if (in_dim % n != 0) throw std::invalid_argument("PhmSpec: n must divide in_dim");
    if (out_dim % n != 0) throw std::invalid_argument("PhmSpec: n must divide out_dim");
    if (rank == 0) throw std::invalid_argument("PhmSpec: rank must be >= 1");
    if (!(init_range > 0.0)) throw std::invalid_argument("PhmSpec: init_range must be > 0");
}

std::vector<ParamPtr> FactorSet::owned() const {
    std::vector<ParamPtr> out;
    out.insert(out.end(), s.begin(), s.end());
    out.insert(out.end(), t.begin(), t.end());
    if (bias) out.push_back(bias);
    return out;
}

Matrix kronecker_product(const Matrix& a, const Matrix& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("kronecker_product: empty operand");
    if (!a.all_finite() || !b.all_finite()) throw std::invalid_argument("kronecker_product: non-finite entry");
    return kernels::kron(a, b);
}

std::vector<ParamPtr> make_shared_a(std::size_t n, double init_range, std::mt19937_64& rng, const std::string& prefix) {
    std::uniform_real_distribution<double> dist(-init_range, init_range);
    std::vector<ParamPtr> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto p = make_param(prefix + ".A." + std::to_string(i), n, n, ParamRole::weight);
        for (double& v : p->value.values) v = dist(rng);
        out.push_back(std::move(p));
    }
    return out;
}

FactorSet make_factors(const PhmSpec& spec, std::vector<ParamPtr> shared_a, std::mt19937_64& rng,
                       const std::string& prefix, double s_std, double t_std) {
    spec.validate();
    FactorSet f;
    f.shared_a = std::move(shared_a);
    auto draw = [&rng](Matrix& m, double std) {
        if (std == 0.0) return;
        std::normal_distribution<double> dist(0.0, std);
        for (double& v : m.values) v = dist(rng);
    };
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto s = make_param(prefix + ".s." + std::to_string(i), spec.in_block(), spec.rank, ParamRole::weight);
        draw(s->value, s_std);
        f.s.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto t = make_param(prefix + ".t." + std::to_string(i), spec.rank, spec.out_block(), ParamRole::weight);
        draw(t->value, t_std);
        f.t.push_back(std::move(t));
    }
    f.bias = make_param(prefix + ".bias", 1, spec.out_dim, ParamRole::bias);
    check_factors(spec, f);
    return f;
}

void check_factors(const PhmSpec& spec, const FactorSet& f) {
    spec.validate();
    const std::size_t n = spec.n;
    if (f.shared_a.size() != n || f.s.size() != n || f.t.size() != n) {
        throw std::invalid_argument("FactorSet: expected " + std::to_string(n) + " factors of each kind");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!f.shared_a[i] || f.shared_a[i]->value.rows != n || f.shared_a[i]->value.cols != n)
            throw std::invalid_argument("FactorSet: A factor must be n x n");
        if (!f.s[i] || f.s[i]->value.rows != spec.in_block() || f.s[i]->value.cols != spec.rank)
            throw std::invalid_argument("FactorSet: s factor must be (k/n) x r");
        if (!f.t[i] || f.t[i]->value.rows != spec.rank || f.t[i]->value.cols != spec.out_block())
            throw std::invalid_argument("FactorSet: t factor must be r x (d/n)");
    }
    if (!f.bias || f.bias->value.size() != spec.out_dim) throw std::invalid_argument("FactorSet: bias must have length d");
}

Matrix phm_compose(const PhmSpec& spec, const FactorSet& f) {
    check_factors(spec, f);
    Matrix w(spec.in_dim, spec.out_dim);
    for (std::size_t i = 0; i < spec.n; ++i) {
        Matrix b;
        kernels::gemm(f.s[i]->value, f.t[i]->value, b);
        w = w + kernels::kron(f.shared_a[i]->value, b);
    }
    return w;
}

namespace {

// x viewed as (rows*n) x (k/n); z_i = x_r s_i
Matrix reshape(const Matrix& x, std::size_t rows, std::size_t cols) { return Matrix(rows, cols, x.values); }

// w[b, v, :] = sum_u A[u, v] z[b, u, :]
Matrix mix_blocks(const Matrix& a, const Matrix& z, std::size_t batch, std::size_t n, std::size_t r) {
    Matrix w(batch * n, r);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t u = 0; u < n; ++u) {
            const double* zrow = z.values.data() + (b * n + u) * r;
            for (std::size_t v = 0; v < n; ++v) {
                const double auv = a(u, v);
                double* wrow = w.values.data() + (b * n + v) * r;
                for (std::size_t p = 0; p < r; ++p) wrow[p] += auv * zrow[p];
            }
        }
    }
    return w;
}

}  // namespace

Matrix phm_forward(const Matrix& x, const PhmSpec& spec, const FactorSet& f) {
    check_factors(spec, f);
    if (x.cols != spec.in_dim) {
        throw std::invalid_argument("phm_forward: input width " + std::to_string(x.cols) + " != " +
                                    std::to_string(spec.in_dim));
    }
    const std::size_t batch = x.rows, n = spec.n, r = spec.rank;
    const Matrix xr = reshape(x, batch * n, spec.in_block());
    Matrix yr(batch * n, spec.out_block());
    Matrix z;
    for (std::size_t i = 0; i < n; ++i) {
        kernels::gemm(xr, f.s[i]->value, z);
        const Matrix w = mix_blocks(f.shared_a[i]->value, z, batch, n, r);
        kernels::gemm(w, f.t[i]->value, yr, true);
    }
    Matrix y(batch, spec.out_dim, std::move(yr.values));
    kernels::add_row_bias(y, f.bias->value);
    return y;
}

Matrix phm_backward(const Matrix& x, const Matrix& dy, const PhmSpec& spec, const FactorSet& f) {
    check_factors(spec, f);
    if (x.cols != spec.in_dim || dy.cols != spec.out_dim || x.rows != dy.rows) {
        throw std::invalid_argument("phm_backward: shape mismatch");
    }
    const std::size_t batch = x.rows, n = spec.n, r = spec.rank;
    const Matrix xr = reshape(x, batch * n, spec.in_block());
    const Matrix dyr = reshape(dy, batch * n, spec.out_block());
    Matrix dxr(batch * n, spec.in_block());
    Matrix z, dw;
    for (std::size_t i = 0; i < n; ++i) {
        const Matrix& a = f.shared_a[i]->value;
        kernels::gemm(xr, f.s[i]->value, z);
        const Matrix w = mix_blocks(a, z, batch, n, r);
        if (f.t[i]->trainable) kernels::gemm_tn(w, dyr, f.t[i]->grad, true);
        kernels::gemm_nt(dyr, f.t[i]->value, dw);

        // dz[b, u, :] = sum_v A[u, v] dw[b, v, :]; dA[u, v] = sum_b z[b, u, :] . dw[b, v, :]
        Matrix dz(batch * n, r);
        const bool a_trainable = f.shared_a[i]->trainable;
        Matrix& da = f.shared_a[i]->grad;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t u = 0; u < n; ++u) {
                const double* zrow = z.values.data() + (b * n + u) * r;
                double* dzrow = dz.values.data() + (b * n + u) * r;
                for (std::size_t v = 0; v < n; ++v) {
                    const double* dwrow = dw.values.data() + (b * n + v) * r;
                    const double auv = a(u, v);
                    double dot = 0.0;
                    for (std::size_t p = 0; p < r; ++p) {
                        dzrow[p] += auv * dwrow[p];
                        dot += zrow[p] * dwrow[p];
                    }
                    if (a_trainable) da(u, v) += dot;
                }
            }
        }
        if (f.s[i]->trainable) kernels::gemm_tn(xr, dz, f.s[i]->grad, true);
        kernels::gemm_nt(dz, f.s[i]->value, dxr, true);
    }
    if (f.bias->trainable) kernels::accumulate_column_sums(dy, f.bias->grad);
    return Matrix(batch, spec.in_dim, std::move(dxr.values));
}

ParamCount phm_param_count(const PhmSpec& spec, bool count_shared_a) {
    spec.validate();
    ParamCount c;
    c.per_layer = spec.n * spec.rank * (spec.in_block() + spec.out_block()) + spec.out_dim;
    c.shared = count_shared_a ? spec.n * spec.n * spec.n : 0;
    return c;
}

}  // namespace compfreeze
