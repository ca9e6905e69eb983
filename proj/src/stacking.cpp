#include "fusionlab/baselines.hpp"
#include "fusionlab/crossval.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

StackingModel stacking_fit(const Matrix& x, const std::vector<int>& y, std::size_t folds,
                           std::uint64_t seed, std::size_t n_trees, std::size_t max_depth) {
    if (x.rows() != y.size() || x.rows() == 0) throw ShapeError("stacking_fit: rows vs labels mismatch");

    // Out-of-fold base probabilities feed the meta learner; the split throws
    // StratificationError when a present class has fewer than `folds` samples.
    FoldSplit split = stratified_kfold(y, folds, seed);
    SeededRng root(seed);

    Matrix oof(x.rows(), 3);
    for (std::size_t f = 0; f < folds; ++f) {
        auto train_idx = split.train_indices(f, x.rows());
        Matrix train_x(train_idx.size(), x.cols());
        std::vector<int> train_y(train_idx.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i) {
            std::copy(x.row_ptr(train_idx[i]), x.row_ptr(train_idx[i]) + x.cols(), train_x.row_ptr(i));
            train_y[i] = y[train_idx[i]];
        }
        ForestModel fold_forest =
            forest_fit(train_x, train_y, n_trees, max_depth, root.derive("oof-" + std::to_string(f)).seed());

        const auto& val_idx = split.val_indices[f];
        Matrix val_x(val_idx.size(), x.cols());
        for (std::size_t i = 0; i < val_idx.size(); ++i) {
            std::copy(x.row_ptr(val_idx[i]), x.row_ptr(val_idx[i]) + x.cols(), val_x.row_ptr(i));
        }
        Matrix val_probs = forest_predict_proba(fold_forest, val_x);
        for (std::size_t i = 0; i < val_idx.size(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) oof(val_idx[i], c) = val_probs(i, c);
        }
    }

    StackingModel model;
    model.meta = logreg_fit(oof, y);
    model.base = forest_fit(x, y, n_trees, max_depth, root.derive("base").seed());
    model.fitted = true;
    return model;
}

Matrix stacking_predict_proba(const StackingModel& m, const Matrix& x) {
    if (!m.fitted) throw ContractError("stacking: model not fitted");
    return logreg_predict_proba(m.meta, forest_predict_proba(m.base, x));
}

}  // namespace fusionlab
