#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "fusionlab/matrix.hpp"

namespace fusionlab {

// ---------------------------------------------------------------------------
// Multinomial logistic regression (full-batch gradient descent, zero init).
// ---------------------------------------------------------------------------

struct LogRegModel {
    Matrix w;  // d x 3
    Matrix b;  // 1 x 3
    double l2 = 0.0;
};

// Minimizes mean cross-entropy + (l2/2)||W||^2 (bias unpenalized).  The step
// size halves whenever a step would increase the loss, so the final loss
// never exceeds the zero-init loss.
LogRegModel logreg_fit(const Matrix& x, const std::vector<int>& y, double l2 = 1e-3,
                       std::size_t iters = 500, double lr = 0.5);

Matrix logreg_predict_proba(const LogRegModel& m, const Matrix& x);

double logreg_loss(const LogRegModel& m, const Matrix& x, const std::vector<int>& y);

// ---------------------------------------------------------------------------
// RBF-kernel SVM: one-vs-rest binary machines trained with kernelized
// Pegasos on a precomputed Gram matrix, calibrated with Platt scaling.
// ---------------------------------------------------------------------------

struct BinaryKernelSvm {
    Matrix support_vectors;       // m x d
    std::vector<double> coeff;    // alpha_i * y_i / (reg * T), aligned with rows
    double bias = 0.0;            // kept for the documented decision form; Pegasos leaves it 0
    double platt_a = 0.0;
    double platt_b = 0.0;
    bool class_present = true;    // false when the one-vs-rest positive side is empty
};

struct KernelSvmModel {
    double gamma = 0.0;
    double reg = 0.0;
    std::array<BinaryKernelSvm, 3> per_class;
    bool fitted = false;
};

// gamma defaults to 1 / (d * mean per-feature variance).  The index stream
// for the stochastic subgradient steps is seeded, so fits are reproducible.
KernelSvmModel svm_fit(const Matrix& x, const std::vector<int>& y,
                       std::optional<double> gamma = std::nullopt, std::size_t epochs = 40,
                       double reg = 1e-2, std::uint64_t seed = 0);

// Raw one-vs-rest decision value sum_i coeff_i K(sv_i, x) + bias.
std::vector<double> svm_decision_values(const KernelSvmModel& m, const Matrix& x, int cls);

// Per-class Platt sigmoid of the decision value, renormalized across the
// three classes.
Matrix svm_predict_proba(const KernelSvmModel& m, const Matrix& x);

// Platt calibration: fits sigma(-(a*f + b)) to targets derived from labels.
// Exposed for tests.
std::pair<double, double> platt_fit(const std::vector<double>& decision, const std::vector<bool>& is_pos);

// ---------------------------------------------------------------------------
// Random forest with axis-aligned gini splits.
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::array<std::uint32_t, 3> votes{};  // leaf class counts
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    int vote(const double* row) const;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::size_t max_depth = 15;
    std::uint64_t seed = 0;
    bool fitted = false;
};

// Bootstrap sample per tree, sqrt(d) random feature candidates per node,
// splits at midpoints between consecutive distinct values.  Ties broken by
// lowest feature index then lowest threshold.  Per-tree rng streams derive
// from (seed, tree index).  bootstrap=false trains every tree on the full
// sample (useful for single-tree fits).
ForestModel forest_fit(const Matrix& x, const std::vector<int>& y, std::size_t n_trees = 300,
                       std::size_t max_depth = 15, std::uint64_t seed = 0, bool bootstrap = true);

// Fraction of trees voting each class.
Matrix forest_predict_proba(const ForestModel& m, const Matrix& x);

// ---------------------------------------------------------------------------
// Stacking: forest base, logistic-regression meta over out-of-fold base
// probabilities.
// ---------------------------------------------------------------------------

struct StackingModel {
    ForestModel base;
    LogRegModel meta;  // input width 3
    bool fitted = false;
};

StackingModel stacking_fit(const Matrix& x, const std::vector<int>& y, std::size_t folds = 5,
                           std::uint64_t seed = 0, std::size_t n_trees = 300,
                           std::size_t max_depth = 15);

Matrix stacking_predict_proba(const StackingModel& m, const Matrix& x);

// Shared helper: argmax with ties toward the lowest class index.
int argmax_class(const double* probs3);
std::vector<int> argmax_classes(const Matrix& probs);

}  // namespace fusionlab
