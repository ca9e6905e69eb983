#include <doctest.h>

#include <cmath>

#include "fusionlab/baselines.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/matrix.hpp"
#include "fusionlab/rng.hpp"

using namespace fusionlab;

namespace {

Matrix gaussian_blobs(const std::vector<std::pair<double, double>>& centers, std::size_t per_class,
                      double sigma, SeededRng& rng, std::vector<int>* labels) {
    Matrix x(centers.size() * per_class, 2);
    labels->clear();
    std::size_t r = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++r) {
            x(r, 0) = centers[c].first + rng.normal(0, sigma);
            x(r, 1) = centers[c].second + rng.normal(0, sigma);
            labels->push_back(static_cast<int>(c) + 1);
        }
    }
    return x;
}

double train_accuracy(const Matrix& probs, const std::vector<int>& y) {
    auto pred = argmax_classes(probs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

void check_simplex_rows(const Matrix& probs) {
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            CHECK(probs(r, c) >= 0.0);
            sum += probs(r, c);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

TEST_CASE("logreg separates 1-D two-class data") {
    Matrix x = Matrix::from_rows({{-2.0}, {-1.5}, {-0.7}, {0.6}, {1.2}, {2.5}});
    std::vector<int> y{1, 1, 1, 2, 2, 2};
    LogRegModel m = logreg_fit(x, y, 1e-4, 800, 1.0);
    CHECK(train_accuracy(logreg_predict_proba(m, x), y) == 1.0);
}

TEST_CASE("logreg strong L2 shrinks weights toward zero") {
    SeededRng rng(1);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, 0}, {1, 0}, {0, 1.5}}, 15, 0.4, rng, &y);
    LogRegModel weak = logreg_fit(x, y, 1e-4, 300, 0.5);
    LogRegModel strong = logreg_fit(x, y, 1e4, 300, 0.5);
    double norm_weak = 0.0, norm_strong = 0.0;
    for (double v : weak.w.data()) norm_weak += v * v;
    for (double v : strong.w.data()) norm_strong += v * v;
    CHECK(norm_strong < 1e-6);
    CHECK(norm_strong < norm_weak);
}

TEST_CASE("logreg gradient at zero init matches finite differences") {
    SeededRng rng(2);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, -1}, {1, 1}, {1, -1}}, 6, 0.5, rng, &y);
    const double l2 = 0.1;

    // Pack (W, b) into one vector and use the shared finite-difference oracle.
    auto loss_at = [&](const std::vector<double>& theta) {
        LogRegModel m;
        m.w = Matrix(2, 3, std::vector<double>(theta.begin(), theta.begin() + 6));
        m.b = Matrix(1, 3, std::vector<double>(theta.begin() + 6, theta.end()));
        m.l2 = l2;
        return logreg_loss(m, x, y);
    };
    std::vector<double> zero(9, 0.0);
    auto fd = finite_diff_grad(loss_at, zero, 1e-6);

    // Analytic gradient at zero init: probs are uniform.
    Matrix p(x.rows(), 3, 1.0 / 3.0);
    for (std::size_t r = 0; r < p.rows(); ++r) p(r, static_cast<std::size_t>(y[r] - 1)) -= 1.0;
    Matrix grad_w = matmul(transpose(x), p);
    scale_inplace(grad_w, 1.0 / static_cast<double>(x.rows()));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(fd[i] - grad_w.data()[i]) < 1e-5);
    for (std::size_t c = 0; c < 3; ++c) {
        double gb = 0.0;
        for (std::size_t r = 0; r < p.rows(); ++r) gb += p(r, c);
        gb /= static_cast<double>(x.rows());
        CHECK(std::abs(fd[6 + c] - gb) < 1e-5);
    }
}

TEST_CASE("logreg loss after fit never exceeds zero-init loss") {
    SeededRng rng(3);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, 0}, {0.5, 0.5}, {1, -1}}, 10, 0.8, rng, &y);
    LogRegModel zero;
    zero.w = Matrix(2, 3);
    zero.b = Matrix(1, 3);
    zero.l2 = 1e-3;
    LogRegModel fit = logreg_fit(x, y, 1e-3);
    CHECK(logreg_loss(fit, x, y) <= logreg_loss(zero, x, y));
}

TEST_CASE("logreg predict_proba simplex and oracle") {
    LogRegModel zero;
    zero.w = Matrix(2, 3);
    zero.b = Matrix(1, 3);
    Matrix x = Matrix::from_rows({{0.3, -0.4}, {1.0, 2.0}});
    Matrix p = logreg_predict_proba(zero, x);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(p(r, c) == doctest::Approx(1.0 / 3));

    LogRegModel m;
    m.w = Matrix::from_rows({{0.5, -0.2, 0.1}, {-0.3, 0.4, 0.2}});
    m.b = Matrix::from_rows({{0.1, -0.1, 0.0}});
    Matrix probs = logreg_predict_proba(m, x);
    check_simplex_rows(probs);
    // Manual softmax oracle for the first row.
    double z0 = 0.3 * 0.5 + (-0.4) * (-0.3) + 0.1;
    double z1 = 0.3 * (-0.2) + (-0.4) * 0.4 - 0.1;
    double z2 = 0.3 * 0.1 + (-0.4) * 0.2;
    double mx = std::max({z0, z1, z2});
    double denom = std::exp(z0 - mx) + std::exp(z1 - mx) + std::exp(z2 - mx);
    CHECK(probs(0, 0) == doctest::Approx(std::exp(z0 - mx) / denom).epsilon(1e-12));

    std::vector<int> ones{1, 1, 1};
    Matrix xs(3, 2);
    CHECK_THROWS_AS(logreg_fit(xs, ones), DataError);
}

// ---------------------------------------------------------------------------
// Kernel SVM
// ---------------------------------------------------------------------------

TEST_CASE("svm solves XOR with the RBF kernel") {
    Matrix x = Matrix::from_rows({{0, 0}, {1, 1}, {0, 1}, {1, 0}});
    std::vector<int> y{1, 1, 2, 2};
    KernelSvmModel m = svm_fit(x, y, std::nullopt, 200, 1e-3, 5);
    CHECK(train_accuracy(svm_predict_proba(m, x), y) == 1.0);
}

TEST_CASE("svm separates linear clusters with calibrated confidence") {
    SeededRng rng(4);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-2.5, 0}, {2.5, 0}, {0, 2.5}}, 15, 0.3, rng, &y);
    KernelSvmModel m = svm_fit(x, y, std::nullopt, 100, 1e-3, 1);
    Matrix probs = svm_predict_proba(m, x);
    CHECK(train_accuracy(probs, y) == 1.0);
    check_simplex_rows(probs);

    // A probe deep inside class 1 territory is confidently class 1.
    Matrix inside = Matrix::from_rows({{-2.5, 0.0}});
    Matrix fp = svm_predict_proba(m, inside);
    CHECK(fp(0, 0) > 0.9);

    // The midpoint between clusters 1 and 2 splits them roughly evenly.
    Matrix mid = Matrix::from_rows({{0.0, 0.0}});
    Matrix mp = svm_predict_proba(m, mid);
    CHECK(std::abs(mp(0, 0) - mp(0, 1)) < 0.25);
}

namespace {

// Exact-dual oracle: projected gradient ascent on
//   max  sum(a) - (1/(2 reg)) a' (yy' . K) a,   0 <= a_i <= 1/n
// which is the dual of the same regularized hinge objective the Pegasos
// trainer minimizes (no bias term in either).
std::vector<double> dual_svm_decisions(const Matrix& x, const std::vector<double>& sign, double gamma,
                                       double reg) {
    const std::size_t n = x.rows();
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dist2 = 0.0;
            for (std::size_t d = 0; d < x.cols(); ++d) {
                double diff = x(i, d) - x(j, d);
                dist2 += diff * diff;
            }
            q(i, j) = sign[i] * sign[j] * std::exp(-gamma * dist2);
        }

    const double box = 1.0 / static_cast<double>(n);
    double lipschitz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += std::abs(q(i, j));
        lipschitz = std::max(lipschitz, row / reg);
    }
    double step = 1.0 / lipschitz;

    std::vector<double> a(n, 0.0);
    for (int it = 0; it < 200000; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double qa = 0.0;
            for (std::size_t j = 0; j < n; ++j) qa += q(i, j) * a[j];
            double grad = 1.0 - qa / reg;
            a[i] = std::clamp(a[i] + step * grad, 0.0, box);
        }
    }

    // f(x_i) = (1/reg) sum_j a_j y_j K_ij
    std::vector<double> decision(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dist2 = 0.0;
            for (std::size_t d = 0; d < x.cols(); ++d) {
                double diff = x(i, d) - x(j, d);
                dist2 += diff * diff;
            }
            decision[i] += a[j] * sign[j] * std::exp(-gamma * dist2);
        }
        decision[i] /= reg;
    }
    return decision;
}

}  // namespace

TEST_CASE("svm decision values sign-match an exact dual oracle") {
    SeededRng rng(6);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, 0.3}, {1, -0.3}}, 10, 0.8, rng, &y);
    const double gamma = 0.5, reg = 0.05;
    KernelSvmModel m = svm_fit(x, y, gamma, 400, reg, 11);

    std::vector<double> sign(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) sign[i] = y[i] == 1 ? 1.0 : -1.0;
    auto oracle = dual_svm_decisions(x, sign, gamma, reg);
    auto mine = svm_decision_values(m, x, 1);

    std::size_t matches = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        matches += (oracle[i] > 0) == (mine[i] > 0);
    }
    CHECK(static_cast<double>(matches) / static_cast<double>(y.size()) >= 0.95);
}

TEST_CASE("svm handles an absent class with a small constant probability") {
    Matrix x = Matrix::from_rows({{-1, 0}, {-1.2, 0}, {1, 0}, {1.3, 0}});
    std::vector<int> y{1, 1, 2, 2};
    KernelSvmModel m = svm_fit(x, y);
    Matrix probs = svm_predict_proba(m, x);
    check_simplex_rows(probs);
    for (std::size_t r = 0; r < probs.rows(); ++r) CHECK(probs(r, 2) < 0.25);
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

TEST_CASE("forest memorizes distinct separable points") {
    SeededRng rng(8);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-3, 0}, {0, 3}, {3, 0}}, 7, 0.2, rng, &y);
    ForestModel m = forest_fit(x, y, 60, 15, 3);
    CHECK(train_accuracy(forest_predict_proba(m, x), y) >= 0.95);
}

TEST_CASE("forest is bit-reproducible under a seed") {
    SeededRng rng(9);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, 0}, {1, 0}, {0, 1}}, 10, 0.6, rng, &y);
    ForestModel a = forest_fit(x, y, 25, 6, 42);
    ForestModel b = forest_fit(x, y, 25, 6, 42);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
            CHECK(a.trees[t].nodes[n].feature == b.trees[t].nodes[n].feature);
            CHECK(a.trees[t].nodes[n].threshold == b.trees[t].nodes[n].threshold);
            CHECK(a.trees[t].nodes[n].votes == b.trees[t].nodes[n].votes);
        }
    }
}

TEST_CASE("single tree reproduces the exhaustive gini split") {
    Matrix x = Matrix::from_rows({{1}, {2}, {3}, {4}});
    std::vector<int> y{1, 1, 2, 2};

    // Exhaustive oracle over the three candidate midpoints.
    double best_threshold = 0.0, best_score = 2.0;
    for (double threshold : {1.5, 2.5, 3.5}) {
        std::array<std::uint32_t, 3> left{}, right{};
        for (std::size_t i = 0; i < 4; ++i) {
            auto& side = x(i, 0) <= threshold ? left : right;
            side[static_cast<std::size_t>(y[i] - 1)]++;
        }
        auto gini_of = [](const std::array<std::uint32_t, 3>& c) {
            double tot = c[0] + c[1] + c[2];
            if (tot == 0) return 0.0;
            double s = 0;
            for (auto v : c) s += (v / tot) * (v / tot);
            return 1.0 - s;
        };
        double nl = left[0] + left[1] + left[2];
        double score = (nl * gini_of(left) + (4.0 - nl) * gini_of(right)) / 4.0;
        if (score < best_score) {
            best_score = score;
            best_threshold = threshold;
        }
    }
    CHECK(best_threshold == 2.5);

    ForestModel m = forest_fit(x, y, 1, 1, 0, /*bootstrap=*/false);
    REQUIRE(m.trees.size() == 1);
    const TreeNode& root = m.trees[0].nodes[0];
    CHECK(root.feature == 0);
    CHECK(root.threshold == doctest::Approx(best_threshold));
}

TEST_CASE("forest probabilities equal the per-tree vote fractions") {
    SeededRng rng(10);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, -1}, {1, 1}, {1, -1}}, 8, 0.7, rng, &y);
    ForestModel m = forest_fit(x, y, 15, 4, 7);
    Matrix probs = forest_predict_proba(m, x);
    check_simplex_rows(probs);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::array<int, 3> votes{};
        for (const auto& tree : m.trees) votes[static_cast<std::size_t>(tree.vote(x.row_ptr(r)) - 1)]++;
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(probs(r, c) == doctest::Approx(votes[c] / 15.0));
        }
    }
}

// ---------------------------------------------------------------------------
// Stacking
// ---------------------------------------------------------------------------

TEST_CASE("stacking composes forest and meta logreg") {
    SeededRng rng(12);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-2, 0}, {2, 0}, {0, 2.5}}, 12, 0.4, rng, &y);
    StackingModel m = stacking_fit(x, y, 5, 3, 40, 8);
    CHECK(m.meta.w.rows() == 3);  // meta input width is the base probability simplex

    Matrix probs = stacking_predict_proba(m, x);
    check_simplex_rows(probs);

    // Composition oracle.
    Matrix manual = logreg_predict_proba(m.meta, forest_predict_proba(m.base, x));
    for (std::size_t i = 0; i < probs.size(); ++i) {
        CHECK(probs.data()[i] == manual.data()[i]);
    }

    ForestModel alone = forest_fit(x, y, 40, 8, 3);
    double acc_stack = train_accuracy(probs, y);
    double acc_forest = train_accuracy(forest_predict_proba(alone, x), y);
    CHECK(acc_stack >= acc_forest - 0.05);

    // Determinism.
    StackingModel again = stacking_fit(x, y, 5, 3, 40, 8);
    Matrix probs2 = stacking_predict_proba(again, x);
    for (std::size_t i = 0; i < probs.size(); ++i) CHECK(probs.data()[i] == probs2.data()[i]);

    // A class smaller than the fold count refuses to stratify.
    std::vector<int> tiny_y{1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3};
    Matrix tiny_x(11, 2);
    CHECK_THROWS_AS(stacking_fit(tiny_x, tiny_y, 5, 0, 5, 3), StratificationError);
}

TEST_CASE("zero meta weights give uniform stacking output") {
    SeededRng rng(13);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1, 0}, {1, 0}, {0, 1}}, 8, 0.5, rng, &y);
    StackingModel m = stacking_fit(x, y, 4, 1, 10, 4);
    m.meta.w = Matrix(3, 3);
    m.meta.b = Matrix(1, 3);
    Matrix probs = stacking_predict_proba(m, x);
    for (std::size_t i = 0; i < probs.size(); ++i) CHECK(probs.data()[i] == doctest::Approx(1.0 / 3));
}

// ---------------------------------------------------------------------------
// Shared invariants
// ---------------------------------------------------------------------------

TEST_CASE("label permutation permutes every model's probability columns") {
    SeededRng rng(14);
    std::vector<int> y;
    Matrix x = gaussian_blobs({{-1.5, 0}, {1.5, 0}, {0, 1.5}}, 10, 0.6, rng, &y);

    // pi maps 1->2, 2->3, 3->1.
    auto pi = [](int cls) { return cls % 3 + 1; };
    std::vector<int> y_perm(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) y_perm[i] = pi(y[i]);

    Matrix probe = Matrix::from_rows({{-1.4, 0.1}, {0.2, 1.4}, {1.6, -0.2}, {0.0, 0.0}});

    auto check_permutes = [&](const Matrix& base, const Matrix& permuted) {
        REQUIRE(base.rows() == permuted.rows());
        for (std::size_t r = 0; r < base.rows(); ++r) {
            for (int cls = 1; cls <= 3; ++cls) {
                CHECK(permuted(r, static_cast<std::size_t>(pi(cls) - 1)) ==
                      doctest::Approx(base(r, static_cast<std::size_t>(cls - 1))).epsilon(1e-12));
            }
        }
    };

    LogRegModel lr_a = logreg_fit(x, y), lr_b = logreg_fit(x, y_perm);
    check_permutes(logreg_predict_proba(lr_a, probe), logreg_predict_proba(lr_b, probe));

    KernelSvmModel svm_a = svm_fit(x, y, std::nullopt, 20, 1e-2, 9);
    KernelSvmModel svm_b = svm_fit(x, y_perm, std::nullopt, 20, 1e-2, 9);
    check_permutes(svm_predict_proba(svm_a, probe), svm_predict_proba(svm_b, probe));

    ForestModel rf_a = forest_fit(x, y, 20, 6, 9), rf_b = forest_fit(x, y_perm, 20, 6, 9);
    check_permutes(forest_predict_proba(rf_a, probe), forest_predict_proba(rf_b, probe));

    StackingModel st_a = stacking_fit(x, y, 5, 9, 15, 5);
    StackingModel st_b = stacking_fit(x, y_perm, 5, 9, 15, 5);
    check_permutes(stacking_predict_proba(st_a, probe), stacking_predict_proba(st_b, probe));
}
