#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fusionlab/crossval.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/metrics.hpp"
#include "fusionlab/rng.hpp"

using namespace fusionlab;

TEST_CASE("accuracy and macro PRF on hand-checked vectors") {
    // Perfect predictor.
    ConfusionMatrix perfect = confusion({1, 2, 3, 1}, {1, 2, 3, 1});
    CHECK(accuracy(perfect) == 1.0);
    PrfSummary ps = macro_prf(perfect);
    CHECK(ps.macro_precision == 1.0);
    CHECK(ps.macro_recall == 1.0);
    CHECK(ps.macro_f1 == 1.0);

    // preds [1,2,3,3] vs truth [1,2,2,3]: accuracy 3/4, macro-F1 7/9.
    ConfusionMatrix cm = confusion({1, 2, 2, 3}, {1, 2, 3, 3});
    CHECK(accuracy(cm) == doctest::Approx(0.75));
    PrfSummary s = macro_prf(cm);
    CHECK(s.macro_f1 == doctest::Approx(7.0 / 9.0).epsilon(1e-12));

    // Constant class-1 predictor on balanced data.
    ConfusionMatrix constant = confusion({1, 2, 3, 1, 2, 3}, {1, 1, 1, 1, 1, 1});
    CHECK(accuracy(constant) == doctest::Approx(1.0 / 3.0));
    PrfSummary cs = macro_prf(constant);
    CHECK(cs.macro_recall == doctest::Approx(1.0 / 3.0));
    CHECK(cs.any_degenerate);  // classes 2 and 3 never predicted

    CHECK(accuracy(cm) == doctest::Approx(1.0 - 1.0 / 4.0));  // 1 - offdiag/total
}

TEST_CASE("binary_auroc pair-counting oracle and ties") {
    // Exhaustive pair count: 3 of 4 (pos, neg) pairs correctly ordered.
    CHECK(binary_auroc({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) ==
          doctest::Approx(0.75).epsilon(1e-12));

    CHECK(binary_auroc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}) == doctest::Approx(1.0));

    // All-equal scores: midranks give exactly 1/2.
    CHECK(binary_auroc({0.5, 0.5, 0.5, 0.5}, {false, true, false, true}) == doctest::Approx(0.5));

    CHECK_THROWS_AS(binary_auroc({0.5, 0.6}, {true, true}), DataError);
}

TEST_CASE("binary_auroc is invariant under strictly monotone score transforms") {
    SeededRng rng(4);
    std::vector<double> scores(60);
    std::vector<bool> pos(60);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.uniform(-2, 2);
        pos[i] = rng.next_double() < 0.4;
    }
    pos[0] = true;
    pos[1] = false;
    double base = binary_auroc(scores, pos);
    std::vector<double> squashed(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) squashed[i] = std::tanh(3.0 * scores[i]) + 5.0;
    CHECK(binary_auroc(squashed, pos) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("auroc_ovr macro average and degenerate handling") {
    Matrix probs = Matrix::from_rows({{0.8, 0.1, 0.1},
                                      {0.2, 0.6, 0.2},
                                      {0.1, 0.2, 0.7},
                                      {0.6, 0.3, 0.1}});
    std::vector<int> truth{1, 2, 3, 1};
    auto auc = auroc_ovr(probs, truth);
    REQUIRE(auc.has_value());
    CHECK(*auc == doctest::Approx(1.0));

    std::vector<std::string> notes;
    std::vector<int> two_class{1, 2, 2, 1};
    auto partial = auroc_ovr(probs, two_class, &notes);
    REQUIRE(partial.has_value());
    CHECK(notes.size() == 1);  // class 3 skipped

    notes.clear();
    std::vector<int> single{1, 1, 1, 1};
    auto none = auroc_ovr(probs, single, &notes);
    CHECK_FALSE(none.has_value());
    CHECK_FALSE(notes.empty());
}

TEST_CASE("random scores give AUROC near one half") {
    SeededRng rng(123);
    const std::size_t n = 10000;
    std::vector<double> scores(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = rng.next_double();
        pos[i] = rng.next_double() < 0.5;
    }
    double auc = binary_auroc(scores, pos);
    CHECK(auc >= 0.45);
    CHECK(auc <= 0.55);
}

TEST_CASE("stratified_kfold exact-divisibility case") {
    std::vector<int> labels;
    labels.insert(labels.end(), 9, 1);
    labels.insert(labels.end(), 3, 2);
    labels.insert(labels.end(), 3, 3);
    FoldSplit split = stratified_kfold(labels, 3, 7);
    std::set<std::size_t> seen;
    for (std::size_t f = 0; f < 3; ++f) {
        std::array<int, 3> counts{0, 0, 0};
        for (std::size_t idx : split.val_indices[f]) {
            counts[static_cast<std::size_t>(labels[idx] - 1)]++;
            CHECK(seen.insert(idx).second);  // disjoint validation folds
        }
        CHECK(counts[0] == 3);
        CHECK(counts[1] == 1);
        CHECK(counts[2] == 1);
    }
    CHECK(seen.size() == labels.size());  // union covers everything
}

TEST_CASE("stratified_kfold keeps per-fold class counts within one of proportional") {
    std::vector<int> labels;
    labels.insert(labels.end(), 10, 1);
    labels.insert(labels.end(), 7, 2);
    labels.insert(labels.end(), 5, 3);
    FoldSplit split = stratified_kfold(labels, 5, 42);
    // Proportional allocation per fold: (2, 1.4, 1).
    const double expect[3] = {2.0, 1.4, 1.0};
    for (std::size_t f = 0; f < 5; ++f) {
        std::array<int, 3> counts{0, 0, 0};
        for (std::size_t idx : split.val_indices[f]) counts[static_cast<std::size_t>(labels[idx] - 1)]++;
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(static_cast<double>(counts[static_cast<std::size_t>(c)]) - expect[c]) <= 1.0);
        }
    }

    // train/val complement.
    auto train = split.train_indices(0, labels.size());
    CHECK(train.size() + split.val_indices[0].size() == labels.size());

    // Determinism.
    FoldSplit again = stratified_kfold(labels, 5, 42);
    CHECK(again.val_indices == split.val_indices);
}

TEST_CASE("stratified_kfold errors name the offending class") {
    std::vector<int> labels{1, 1, 1, 1, 1, 2, 2, 3, 3, 3, 3, 3};
    CHECK_THROWS_WITH_AS(stratified_kfold(labels, 5, 0), doctest::Contains("class 2"),
                         StratificationError);
}
