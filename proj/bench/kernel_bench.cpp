// Serial reference vs OpenMP kernels, plus a toy-encoder forward pass under each backend.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include <omp.h>

#include "compfreeze/encoder.hpp"
#include "compfreeze/kernels.hpp"

using namespace compfreeze;
namespace k = compfreeze::kernels;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> d;
    Matrix m(r, c);
    for (double& v : m.values) v = d(rng);
    return m;
}

double best_ms(const std::function<void()>& f, int reps) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

}  // namespace

int main() {
    std::mt19937_64 rng(42);
    std::printf("threads available: %d\n\n", omp_get_max_threads());
    std::printf("%-28s %12s %12s %8s %10s\n", "kernel", "serial ms", "omp ms", "speedup", "identical");
    for (std::size_t n : {64, 128, 256, 512}) {
        const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
        Matrix cs, co;
        const double ts = best_ms([&] { k::serial::gemm(a, b, cs, false); }, 3);
        const double to = best_ms([&] { k::omp::gemm(a, b, co, false); }, 3);
        char name[64];
        std::snprintf(name, sizeof name, "gemm %zux%zu", n, n);
        std::printf("%-28s %12.3f %12.3f %8.2f %10s\n", name, ts, to, ts / to, cs.values == co.values ? "yes" : "NO");
    }
    {
        const Matrix a = random_matrix(16, 16, rng), b = random_matrix(48, 48, rng);
        Matrix ks, ko;
        const double ts = best_ms([&] { ks = k::serial::kron(a, b); }, 5);
        const double to = best_ms([&] { ko = k::omp::kron(a, b); }, 5);
        std::printf("%-28s %12.3f %12.3f %8.2f %10s\n", "kron 16x16 (x) 48x48", ts, to, ts / to,
                    ks.values == ko.values ? "yes" : "NO");
    }

    auto desc = EncoderDescriptor::toy(128, 64, 128);
    auto enc = Encoder::random(desc, 1, 1.0 / std::sqrt(128.0));
    CompacterConfig cc;
    cc.hidden_dim = 128;
    const auto model = insert_compacters(enc, {TaskKind::sequence_classification, 2},
                                         plan_for_strategy(Strategy::even_lc, 12), cc, 1);
    std::vector<TokenIds> batch(32, TokenIds(64));
    for (auto& ids : batch)
        for (auto& id : ids) id = int(rng() % 64);
    Matrix ls, lo;
    k::set_backend(k::Backend::serial);
    const double ts = best_ms([&] { ls = forward_sequence(model, batch); }, 3);
    k::set_backend(k::Backend::omp);
    const double to = best_ms([&] { lo = forward_sequence(model, batch); }, 3);
    std::printf("%-28s %12.3f %12.3f %8.2f %10s\n", "encoder fwd h128 even_lc b32", ts, to, ts / to,
                ls.values == lo.values ? "yes" : "NO");
    return 0;
}
