#include "compfreeze/metrics.hpp"

#include <stdexcept>

namespace compfreeze {

namespace {
void check_lengths(const std::vector<int>& gold, const std::vector<int>& pred) {
    if (gold.size() != pred.size()) throw std::invalid_argument("metrics: gold/prediction length mismatch");
}
}  // namespace

BinaryCounts binary_counts(const std::vector<int>& gold, const std::vector<int>& pred, int positive) {
    check_lengths(gold, pred);
    BinaryCounts c;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool g = gold[i] == positive, p = pred[i] == positive;
        if (g && p) ++c.tp;
        else if (!g && p) ++c.fp;
        else if (g && !p) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1_from_counts(const BinaryCounts& c) {
    const double denom = 2.0 * double(c.tp) + double(c.fp) + double(c.fn);
    return denom == 0.0 ? 1.0 : 2.0 * double(c.tp) / denom;
}

double binary_f1(const std::vector<int>& gold, const std::vector<int>& pred, int positive) {
    return f1_from_counts(binary_counts(gold, pred, positive));
}

double weighted_f1(const std::vector<int>& gold, const std::vector<int>& pred) {
    check_lengths(gold, pred);
    std::map<int, BinaryCounts> per_class;
    std::map<int, std::size_t> support;
    std::size_t total = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0) continue;
        ++support[gold[i]];
        ++total;
    }
    if (total == 0) return 1.0;
    for (const auto& [label, n] : support) per_class[label] = {};
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0) continue;
        for (auto& [label, c] : per_class) {
            const bool g = gold[i] == label, p = pred[i] == label;
            if (g && p) ++c.tp;
            else if (!g && p) ++c.fp;
            else if (g && !p) ++c.fn;
        }
    }
    double score = 0.0;
    for (const auto& [label, c] : per_class) score += f1_from_counts(c) * double(support[label]) / double(total);
    return score;
}

double accuracy(const std::vector<int>& gold, const std::vector<int>& pred) {
    check_lengths(gold, pred);
    std::size_t n = 0, hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0) continue;
        ++n;
        hit += gold[i] == pred[i];
    }
    return n ? double(hit) / double(n) : 1.0;
}

}  // namespace compfreeze
