#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusionlab/matrix.hpp"

namespace fusionlab {

// 3x3 contingency table; rows are true classes, columns predictions.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, 3>, 3> counts{};

    void add(int truth, int pred);
    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t operator()(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth - 1)][static_cast<std::size_t>(pred - 1)];
    }
};

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred);

double accuracy(const ConfusionMatrix& cm);

// Per-class precision/recall/F1 with the 0/0 -> 0 convention, plus their
// unweighted (macro) means.  `degenerate` flags classes where 0/0 occurred.
struct PrfSummary {
    std::array<double, 3> precision{}, recall{}, f1{};
    std::array<bool, 3> degenerate{};
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    bool any_degenerate = false;
};

PrfSummary macro_prf(const ConfusionMatrix& cm);

// Mann-Whitney rank statistic with midranks for ties; equals the probability
// that a random positive outranks a random negative.
double binary_auroc(const std::vector<double>& scores, const std::vector<bool>& is_pos);

// Macro one-vs-rest AUROC over the three probability columns.  Classes with
// no positives or no negatives are skipped (noted); returns nullopt when no
// class is scorable.
std::optional<double> auroc_ovr(const Matrix& probs, const std::vector<int>& truth,
                                std::vector<std::string>* notes = nullptr);

}  // namespace fusionlab
