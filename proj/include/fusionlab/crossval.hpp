#pragma once

#include <cstdint>
#include <vector>

namespace fusionlab {

// Stratified k-fold assignment over a label vector.  Validation index sets
// partition [0, n); per-fold class counts stay within one sample of exact
// proportionality.
struct FoldSplit {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> val_indices;  // one set per fold, sorted

    std::vector<std::size_t> train_indices(std::size_t fold, std::size_t n) const;
};

// Per-class seeded shuffle followed by round-robin fold assignment.  Throws
// StratificationError naming any class with fewer than k samples.
FoldSplit stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

}  // namespace fusionlab
