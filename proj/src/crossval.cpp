#include "fusionlab/crossval.hpp"

#include <algorithm>

#include "fusionlab/errors.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

std::vector<std::size_t> FoldSplit::train_indices(std::size_t fold, std::size_t n) const {
    std::vector<bool> in_val(n, false);
    for (std::size_t idx : val_indices[fold]) in_val[idx] = true;
    std::vector<std::size_t> train;
    train.reserve(n - val_indices[fold].size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!in_val[i]) train.push_back(i);
    }
    return train;
}

FoldSplit stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("stratified_kfold: k must be >= 2");
    FoldSplit split;
    split.k = k;
    split.seed = seed;
    split.val_indices.assign(k, {});

    for (int label : labels) {
        if (label < 1 || label > 3) {
            throw DataError("stratified_kfold: label " + std::to_string(label) + " outside {1,2,3}");
        }
    }

    for (int cls = 1; cls <= 3; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) idx.push_back(i);
        }
        if (idx.empty()) continue;
        if (idx.size() < k) {
            throw StratificationError("stratified_kfold: class " + std::to_string(cls) + " has " +
                                      std::to_string(idx.size()) + " samples, fewer than k=" +
                                      std::to_string(k));
        }
        // Each class restarts the same derived stream.  The assignment then
        // depends only on a class's member set, so relabeling classes by a
        // permutation permutes the folds consistently.
        SeededRng rng = SeededRng(seed).derive("kfold");
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            split.val_indices[i % k].push_back(idx[i]);
        }
    }
    for (auto& fold : split.val_indices) std::sort(fold.begin(), fold.end());
    return split;
}

}  // namespace fusionlab
