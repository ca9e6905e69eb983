#include <cmath>
#include <set>

#include "fusionlab/baselines.hpp"
#include "fusionlab/errors.hpp"

namespace fusionlab {

namespace {

Matrix logits_of(const LogRegModel& m, const Matrix& x) {
    Matrix z = matmul(x, m.w);
    for (std::size_t r = 0; r < z.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c) z(r, c) += m.b(0, c);
    return z;
}

double mean_ce_from_logits(const Matrix& z, const std::vector<int>& y) {
    double loss = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const double* row = z.row_ptr(r);
        double mx = std::max({row[0], row[1], row[2]});
        double lse = std::log(std::exp(row[0] - mx) + std::exp(row[1] - mx) + std::exp(row[2] - mx)) + mx;
        loss += lse - row[static_cast<std::size_t>(y[r] - 1)];
    }
    return loss / static_cast<double>(z.rows());
}

}  // namespace

double logreg_loss(const LogRegModel& m, const Matrix& x, const std::vector<int>& y) {
    double ce = mean_ce_from_logits(logits_of(m, x), y);
    double penalty = 0.0;
    for (double v : m.w.data()) penalty += v * v;
    return ce + 0.5 * m.l2 * penalty;
}

LogRegModel logreg_fit(const Matrix& x, const std::vector<int>& y, double l2, std::size_t iters,
                       double lr) {
    if (x.rows() != y.size() || x.rows() == 0) {
        throw ShapeError("logreg_fit: rows " + std::to_string(x.rows()) + " vs labels " +
                         std::to_string(y.size()));
    }
    std::set<int> distinct(y.begin(), y.end());
    for (int cls : distinct) {
        if (cls < 1 || cls > 3) throw DataError("logreg_fit: label outside {1,2,3}");
    }
    if (distinct.size() < 2) throw DataError("logreg_fit: single-class data is degenerate");

    LogRegModel m;
    m.w = Matrix(x.cols(), 3);
    m.b = Matrix(1, 3);
    m.l2 = l2;

    const double n = static_cast<double>(x.rows());
    double step = lr;
    double loss = logreg_loss(m, x, y);
    for (std::size_t it = 0; it < iters; ++it) {
        Matrix p = softmax_rows(logits_of(m, x));
        for (std::size_t r = 0; r < p.rows(); ++r) p(r, static_cast<std::size_t>(y[r] - 1)) -= 1.0;
        Matrix grad_w = matmul(transpose(x), p);
        scale_inplace(grad_w, 1.0 / n);
        axpy_inplace(grad_w, l2, m.w);
        Matrix grad_b(1, 3);
        for (std::size_t r = 0; r < p.rows(); ++r)
            for (std::size_t c = 0; c < 3; ++c) grad_b(0, c) += p(r, c) / n;

        // Halve the step whenever it would not descend; keeps the fit
        // monotone and deterministic.
        while (step > 1e-12) {
            LogRegModel trial = m;
            axpy_inplace(trial.w, -step, grad_w);
            axpy_inplace(trial.b, -step, grad_b);
            double trial_loss = logreg_loss(trial, x, y);
            if (trial_loss <= loss) {
                m = std::move(trial);
                loss = trial_loss;
                break;
            }
            step *= 0.5;
        }
        if (step <= 1e-12) break;
    }
    return m;
}

Matrix logreg_predict_proba(const LogRegModel& m, const Matrix& x) {
    if (x.cols() != m.w.rows()) {
        throw ShapeError("logreg_predict_proba: input width " + std::to_string(x.cols()) +
                         " vs model width " + std::to_string(m.w.rows()));
    }
    return softmax_rows(logits_of(m, x));
}

int argmax_class(const double* probs3) {
    int best = 0;
    for (int c = 1; c < 3; ++c) {
        if (probs3[c] > probs3[best]) best = c;
    }
    return best + 1;
}

std::vector<int> argmax_classes(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = argmax_class(probs.row_ptr(r));
    return out;
}

}  // namespace fusionlab
