#include <cmath>

#include "fusionlab/errors.hpp"
#include "fusionlab/fusion_model.hpp"

namespace fusionlab {

namespace {

double mean_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    double loss = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* row = logits.row_ptr(r);
        double mx = std::max({row[0], row[1], row[2]});
        double lse =
            std::log(std::exp(row[0] - mx) + std::exp(row[1] - mx) + std::exp(row[2] - mx)) + mx;
        loss += lse - row[static_cast<std::size_t>(labels[r] - 1)];
    }
    return loss / static_cast<double>(logits.rows());
}

}  // namespace

GradCheckReport gradient_check(const ArchConfig& cfg, std::size_t batch, std::uint64_t seed, double h,
                               bool tamper) {
    if (batch < 1) throw ConfigError("gradient_check: batch must be >= 1");

    SeededRng root(seed);
    SeededRng init_rng = root.derive("init");
    FusionModel model = init_model(cfg, init_rng);
    model.mode = RunMode::Eval;  // frozen BN statistics, dropout off

    // Perturb the constant-initialized tensors (biases, norm scales, running
    // stats) so no gradient path sits at a symmetric special case.
    SeededRng noise = root.derive("param-noise");
    for (auto& [name, t] : model.param_refs()) {
        for (double& v : t->data()) v += noise.normal(0.0, 0.02);
    }
    for (auto& [name, t] : model.state_refs()) {
        bool is_var = name.find("var") != std::string::npos;
        for (double& v : t->data()) v = is_var ? noise.uniform(0.5, 1.5) : noise.normal(0.0, 0.3);
    }

    SeededRng data_rng = root.derive("data");
    Matrix text(batch, cfg.d_text), image(batch, cfg.d_image);
    for (double& v : text.data()) v = data_rng.normal();
    for (double& v : image.data()) v = data_rng.normal();
    std::vector<int> labels(batch);
    for (auto& y : labels) y = 1 + static_cast<int>(data_rng.next_below(3));

    SeededRng unused(0);
    ForwardOutput out = forward(model, text, image, unused);
    GradientSet grads = backward(model, out.cache, labels);
    if (tamper) grads.tensors[0].data()[0] += 1e-2;

    GradCheckReport report;
    auto refs = model.param_refs();
    for (std::size_t g = 0; g < refs.size(); ++g) {
        GradCheckGroup group;
        group.name = refs[g].first;
        Matrix& tensor = *refs[g].second;
        for (std::size_t e = 0; e < tensor.size(); ++e) {
            double saved = tensor.data()[e];
            tensor.data()[e] = saved + h;
            double lp = mean_cross_entropy(forward(model, text, image, unused).logits, labels);
            tensor.data()[e] = saved - h;
            double lm = mean_cross_entropy(forward(model, text, image, unused).logits, labels);
            tensor.data()[e] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm)) {
                throw EvaluationError("gradient_check: non-finite loss at " + group.name);
            }
            double numeric = (lp - lm) / (2.0 * h);
            double analytic = grads.tensors[g].data()[e];
            double abs_err = std::abs(analytic - numeric);
            double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            group.max_abs_err = std::max(group.max_abs_err, abs_err);
            group.max_rel_err = std::max(group.max_rel_err, rel);
            ++group.entries;
        }
        report.worst_rel_err = std::max(report.worst_rel_err, group.max_rel_err);
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace fusionlab
