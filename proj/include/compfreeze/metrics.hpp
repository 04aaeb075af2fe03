#pragma once

#include <cstddef>
#include <map>
#include <vector>

namespace compfreeze {

struct BinaryCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

BinaryCounts binary_counts(const std::vector<int>& gold, const std::vector<int>& pred, int positive);

/// F1 of the positive class. With no positives in either gold or prediction
/// the score is 1.0 (nothing to find, nothing falsely found).
double f1_from_counts(const BinaryCounts& c);
double binary_f1(const std::vector<int>& gold, const std::vector<int>& pred, int positive);

/// Support-weighted mean of per-class F1 over the classes present in gold.
/// Positions whose gold label is negative (padding) are skipped.
double weighted_f1(const std::vector<int>& gold, const std::vector<int>& pred);

double accuracy(const std::vector<int>& gold, const std::vector<int>& pred);

}  // namespace compfreeze
