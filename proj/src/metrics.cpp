#include "fusionlab/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "fusionlab/errors.hpp"

namespace fusionlab {

void ConfusionMatrix::add(int truth, int pred) {
    if (truth < 1 || truth > 3 || pred < 1 || pred > 3) {
        throw DataError("confusion: class outside {1,2,3}");
    }
    counts[static_cast<std::size_t>(truth - 1)][static_cast<std::size_t>(pred - 1)]++;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto v : row) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    return counts[0][0] + counts[1][1] + counts[2][2];
}

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size()) {
        throw ShapeError("confusion: truth and prediction lengths differ");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    std::uint64_t total = cm.total();
    if (total == 0) throw DataError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

PrfSummary macro_prf(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("macro_prf: empty confusion matrix");
    PrfSummary s;
    for (std::size_t c = 0; c < 3; ++c) {
        std::uint64_t tp = cm.counts[c][c];
        std::uint64_t pred_c = cm.counts[0][c] + cm.counts[1][c] + cm.counts[2][c];
        std::uint64_t true_c = cm.counts[c][0] + cm.counts[c][1] + cm.counts[c][2];
        if (pred_c == 0) s.degenerate[c] = true;
        if (true_c == 0) s.degenerate[c] = true;
        s.precision[c] = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
        s.recall[c] = true_c ? static_cast<double>(tp) / static_cast<double>(true_c) : 0.0;
        double pr = s.precision[c] + s.recall[c];
        s.f1[c] = pr > 0.0 ? 2.0 * s.precision[c] * s.recall[c] / pr : 0.0;
        s.any_degenerate = s.any_degenerate || s.degenerate[c];
    }
    s.macro_precision = (s.precision[0] + s.precision[1] + s.precision[2]) / 3.0;
    s.macro_recall = (s.recall[0] + s.recall[1] + s.recall[2]) / 3.0;
    s.macro_f1 = (s.f1[0] + s.f1[1] + s.f1[2]) / 3.0;
    return s;
}

double binary_auroc(const std::vector<double>& scores, const std::vector<bool>& is_pos) {
    if (scores.size() != is_pos.size()) throw ShapeError("auroc: scores/labels lengths differ");
    std::size_t n_pos = 0;
    for (bool p : is_pos) n_pos += p;
    std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auroc: needs both positives and negatives");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tied score runs.
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }

    double pos_rank_sum = 0.0;
    for (std::size_t t = 0; t < scores.size(); ++t) {
        if (is_pos[t]) pos_rank_sum += rank[t];
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::optional<double> auroc_ovr(const Matrix& probs, const std::vector<int>& truth,
                                std::vector<std::string>* notes) {
    if (probs.rows() != truth.size() || probs.cols() != 3) {
        throw ShapeError("auroc_ovr: probs must be n x 3 aligned with truth");
    }
    double sum = 0.0;
    int scored = 0;
    for (int cls = 1; cls <= 3; ++cls) {
        std::vector<double> scores(truth.size());
        std::vector<bool> is_pos(truth.size());
        std::size_t n_pos = 0;
        for (std::size_t r = 0; r < truth.size(); ++r) {
            scores[r] = probs(r, static_cast<std::size_t>(cls - 1));
            is_pos[r] = truth[r] == cls;
            n_pos += is_pos[r];
        }
        if (n_pos == 0 || n_pos == truth.size()) {
            if (notes) {
                notes->push_back("auroc: class " + std::to_string(cls) +
                                 " skipped (one-vs-rest side empty)");
            }
            continue;
        }
        sum += binary_auroc(scores, is_pos);
        ++scored;
    }
    if (scored == 0) {
        if (notes) notes->push_back("auroc: undefined (single-class truth)");
        return std::nullopt;
    }
    return sum / static_cast<double>(scored);
}

}  // namespace fusionlab
