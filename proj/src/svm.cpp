#include <cmath>
#include <set>

#include "fusionlab/baselines.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

namespace {

double rbf_kernel(const double* a, const double* b, std::size_t d, double gamma) {
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double diff = a[j] - b[j];
        dist2 += diff * diff;
    }
    return std::exp(-gamma * dist2);
}

double default_gamma(const Matrix& x) {
    // 1 / (d * mean per-feature variance), the usual "scale" heuristic.
    const double n = static_cast<double>(x.rows());
    double total_var = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
        mean /= n;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double d = x(i, j) - mean;
            sq += d * d;
        }
        total_var += sq / n;
    }
    double mean_var = total_var / static_cast<double>(x.cols());
    if (mean_var <= 0.0) mean_var = 1.0;
    return 1.0 / (static_cast<double>(x.cols()) * mean_var);
}

double stable_sigmoid_of(double f_ap_b) {
    if (f_ap_b >= 0.0) {
        double e = std::exp(-f_ap_b);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(f_ap_b));
}

}  // namespace

std::pair<double, double> platt_fit(const std::vector<double>& decision,
                                    const std::vector<bool>& is_pos) {
    // Newton fit of P(y=1|f) = sigma(-(a f + b)) against smoothed targets,
    // with a tiny ridge on the Hessian.
    const std::size_t n = decision.size();
    double prior1 = 0.0;
    for (bool p : is_pos) prior1 += p;
    double prior0 = static_cast<double>(n) - prior1;

    const double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo_target = 1.0 / (prior0 + 2.0);
    const double sigma = 1e-12;
    const int max_iter = 100;
    const double min_step = 1e-10;

    std::vector<double> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = is_pos[i] ? hi_target : lo_target;

    double a = 0.0;
    double b = std::log((prior0 + 1.0) / (prior1 + 1.0));

    auto objective = [&](double ca, double cb) {
        double fval = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = decision[i] * ca + cb;
            if (z >= 0.0) {
                fval += target[i] * z + std::log1p(std::exp(-z));
            } else {
                fval += (target[i] - 1.0) * z + std::log1p(std::exp(z));
            }
        }
        return fval;
    };

    double fval = objective(a, b);
    for (int it = 0; it < max_iter; ++it) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double p = stable_sigmoid_of(decision[i] * a + b);
            double d2 = p * (1.0 - p);
            h11 += decision[i] * decision[i] * d2;
            h22 += d2;
            h21 += decision[i] * d2;
            double d1 = target[i] - p;
            g1 += decision[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;

        double det = h11 * h22 - h21 * h21;
        double da = -(h22 * g1 - h21 * g2) / det;
        double db = -(-h21 * g1 + h11 * g2) / det;
        double gd = g1 * da + g2 * db;

        double step = 1.0;
        while (step >= min_step) {
            double na = a + step * da, nb = b + step * db;
            double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step *= 0.5;
        }
        if (step < min_step) break;
    }
    return {a, b};
}

KernelSvmModel svm_fit(const Matrix& x, const std::vector<int>& y, std::optional<double> gamma,
                       std::size_t epochs, double reg, std::uint64_t seed) {
    const std::size_t n = x.rows();
    if (n != y.size() || n == 0) throw ShapeError("svm_fit: rows vs labels mismatch");
    std::set<int> distinct(y.begin(), y.end());
    for (int cls : distinct) {
        if (cls < 1 || cls > 3) throw DataError("svm_fit: label outside {1,2,3}");
    }
    if (distinct.size() < 2) throw DataError("svm_fit: single-class data is degenerate");
    if (reg <= 0.0) throw ConfigError("svm_fit: reg must be > 0");

    KernelSvmModel model;
    model.gamma = gamma.value_or(default_gamma(x));
    if (model.gamma <= 0.0) throw ConfigError("svm_fit: gamma must be > 0");
    model.reg = reg;

    // One Gram matrix shared by the three one-vs-rest problems.
    Matrix gram(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double k = rbf_kernel(x.row_ptr(i), x.row_ptr(j), x.cols(), model.gamma);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }

    // One index stream shared by all three binary problems; relabeling the
    // classes then permutes the fitted machines rather than reshuffling them.
    SeededRng step_rng = SeededRng(seed).derive("svm-steps");
    const std::uint64_t total_steps = static_cast<std::uint64_t>(epochs) * n;
    std::vector<std::size_t> step_index(total_steps);
    for (auto& idx : step_index) idx = step_rng.next_below(n);

    for (int cls = 1; cls <= 3; ++cls) {
        BinaryKernelSvm& bin = model.per_class[static_cast<std::size_t>(cls - 1)];
        std::vector<double> sign(n);
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sign[i] = (y[i] == cls) ? 1.0 : -1.0;
            n_pos += y[i] == cls;
        }
        if (n_pos == 0) {
            // The one-vs-rest positive side is empty.  Decision stays 0 and
            // the Platt output is the smoothed empty-class rate 1/(n+2).
            bin.class_present = false;
            bin.platt_a = 0.0;
            bin.platt_b = std::log(static_cast<double>(n) + 1.0);
            continue;
        }

        // Kernelized Pegasos: at step t, draw i, update alpha_i when the
        // margin y_i f_t(x_i) falls below 1, with f_t = sum alpha_j y_j K / (reg t).
        std::vector<std::uint64_t> alpha(n, 0);
        for (std::uint64_t t = 1; t <= total_steps; ++t) {
            std::size_t i = step_index[t - 1];
            double s = 0.0;
            const double* gram_row = gram.row_ptr(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (alpha[j]) s += static_cast<double>(alpha[j]) * sign[j] * gram_row[j];
            }
            double margin = sign[i] * s / (reg * static_cast<double>(t));
            if (margin < 1.0) alpha[i]++;
        }

        std::vector<std::size_t> sv_idx;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] > 0) sv_idx.push_back(i);
        }
        if (sv_idx.empty()) {
            // Every point already sits outside the margin at t=1; keep the
            // first positive as a nominal support vector.
            for (std::size_t i = 0; i < n; ++i) {
                if (sign[i] > 0) {
                    sv_idx.push_back(i);
                    alpha[i] = 1;
                    break;
                }
            }
        }

        bin.support_vectors = Matrix(sv_idx.size(), x.cols());
        bin.coeff.resize(sv_idx.size());
        const double denom = reg * static_cast<double>(total_steps);
        for (std::size_t s = 0; s < sv_idx.size(); ++s) {
            std::size_t i = sv_idx[s];
            std::copy(x.row_ptr(i), x.row_ptr(i) + x.cols(), bin.support_vectors.row_ptr(s));
            bin.coeff[s] = static_cast<double>(alpha[i]) * sign[i] / denom;
        }

        // Calibrate on held-in decision values.
        std::vector<double> decision(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (alpha[j]) s += static_cast<double>(alpha[j]) * sign[j] * gram(i, j);
            }
            decision[i] = s / denom;
        }
        std::vector<bool> is_pos(n);
        for (std::size_t i = 0; i < n; ++i) is_pos[i] = sign[i] > 0;
        auto [pa, pb] = platt_fit(decision, is_pos);
        bin.platt_a = pa;
        bin.platt_b = pb;
    }
    model.fitted = true;
    return model;
}

std::vector<double> svm_decision_values(const KernelSvmModel& m, const Matrix& x, int cls) {
    if (!m.fitted) throw ContractError("svm: model not fitted");
    if (cls < 1 || cls > 3) throw ConfigError("svm_decision_values: class outside {1,2,3}");
    const BinaryKernelSvm& bin = m.per_class[static_cast<std::size_t>(cls - 1)];
    std::vector<double> out(x.rows(), 0.0);
    if (!bin.class_present) return out;
    if (x.cols() != bin.support_vectors.cols()) {
        throw ShapeError("svm: input width " + std::to_string(x.cols()) + " vs model width " +
                         std::to_string(bin.support_vectors.cols()));
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = bin.bias;
        for (std::size_t v = 0; v < bin.support_vectors.rows(); ++v) {
            s += bin.coeff[v] *
                 rbf_kernel(x.row_ptr(r), bin.support_vectors.row_ptr(v), x.cols(), m.gamma);
        }
        out[r] = s;
    }
    return out;
}

Matrix svm_predict_proba(const KernelSvmModel& m, const Matrix& x) {
    if (!m.fitted) throw ContractError("svm: model not fitted");
    Matrix probs(x.rows(), 3);
    for (int cls = 1; cls <= 3; ++cls) {
        const BinaryKernelSvm& bin = m.per_class[static_cast<std::size_t>(cls - 1)];
        std::vector<double> decision = svm_decision_values(m, x, cls);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            probs(r, static_cast<std::size_t>(cls - 1)) =
                stable_sigmoid_of(decision[r] * bin.platt_a + bin.platt_b);
        }
    }
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double sum = probs(r, 0) + probs(r, 1) + probs(r, 2);
        for (std::size_t c = 0; c < 3; ++c) probs(r, c) /= sum;
    }
    return probs;
}

}  // namespace fusionlab
