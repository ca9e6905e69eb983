#include "fusionlab/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "fusionlab/errors.hpp"

namespace fusionlab {

TrainConfig TrainConfig::adagrad_defaults() {
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::Adagrad;
    cfg.lr = 0.01;
    cfg.max_epochs = 20;
    return cfg;
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
    if (step_gamma <= 0.0 || step_gamma > 1.0) throw ConfigError("train: step_gamma must lie in (0,1]");
    if (step_every < 1) throw ConfigError("train: step_every must be >= 1");
    if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 for batch norm");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (aug_sigma < 0.0) throw ConfigError("train: aug_sigma must be >= 0");
    if (aug_mask_p < 0.0 || aug_mask_p >= 1.0) throw ConfigError("train: aug_mask_p must lie in [0,1)");
}

OptimizerState make_optimizer_state(OptimizerKind kind, const FusionModel& model) {
    OptimizerState state;
    state.kind = kind;
    for (const auto& [name, t] : model.param_refs()) {
        if (kind == OptimizerKind::Adam) {
            state.m.emplace_back(t->rows(), t->cols());
            state.v.emplace_back(t->rows(), t->cols());
        } else {
            state.sumsq.emplace_back(t->rows(), t->cols());
        }
    }
    return state;
}

namespace {

void check_alignment(const std::vector<Matrix*>& params, const GradientSet& grads,
                     const std::vector<Matrix>& accum) {
    if (params.size() != grads.tensors.size() || params.size() != accum.size()) {
        throw ShapeError("optimizer: parameter/gradient/state layouts disagree");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads.tensors[i].rows() ||
            params[i]->cols() != grads.tensors[i].cols()) {
            throw ShapeError("optimizer: tensor " + std::to_string(i) + " shape mismatch");
        }
    }
}

}  // namespace

void adam_step(std::vector<Matrix*>& params, const GradientSet& grads, OptimizerState& state,
               double lr, double weight_decay) {
    if (state.kind != OptimizerKind::Adam) throw ContractError("adam_step: state built for adagrad");
    check_alignment(params, grads, state.m);
    state.timestep += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.timestep));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.timestep));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
            double g = grads.tensors[i].data()[e] + weight_decay * p.data()[e];
            m.data()[e] = state.beta1 * m.data()[e] + (1.0 - state.beta1) * g;
            v.data()[e] = state.beta2 * v.data()[e] + (1.0 - state.beta2) * g * g;
            double mhat = m.data()[e] / bc1;
            double vhat = v.data()[e] / bc2;
            p.data()[e] -= lr * mhat / (std::sqrt(vhat) + state.adam_eps);
        }
    }
}

void adagrad_step(std::vector<Matrix*>& params, const GradientSet& grads, OptimizerState& state,
                  double lr, double weight_decay) {
    if (state.kind != OptimizerKind::Adagrad) throw ContractError("adagrad_step: state built for adam");
    check_alignment(params, grads, state.sumsq);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        Matrix& s = state.sumsq[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
            double g = grads.tensors[i].data()[e] + weight_decay * p.data()[e];
            s.data()[e] += g * g;
            p.data()[e] -= lr * g / (std::sqrt(s.data()[e]) + state.adagrad_eps);
        }
    }
}

double step_decay(double lr0, std::size_t epoch, double gamma, std::size_t every) {
    if (every < 1) throw ConfigError("step_decay: every must be >= 1");
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("step_decay: gamma must lie in (0,1]");
    return lr0 * std::pow(gamma, static_cast<double>(epoch / every));
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows() != labels.size()) throw ShapeError("cross_entropy: rows vs labels mismatch");
    if (logits.rows() == 0) throw ContractError("cross_entropy: empty batch");
    if (logits.cols() != 3) throw ShapeError("cross_entropy: logits must have 3 columns");
    double loss = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        int y = labels[r];
        if (y < 1 || y > 3) throw DataError("cross_entropy: label outside {1,2,3}");
        const double* row = logits.row_ptr(r);
        double mx = std::max({row[0], row[1], row[2]});
        double lse =
            std::log(std::exp(row[0] - mx) + std::exp(row[1] - mx) + std::exp(row[2] - mx)) + mx;
        loss += lse - row[static_cast<std::size_t>(y - 1)];
    }
    return loss / static_cast<double>(logits.rows());
}

double combined_loss(const Matrix& labeled_logits, const std::vector<int>& labeled_y,
                     const Matrix& pseudo_logits, const std::vector<int>& pseudo_y, double lambda) {
    const bool has_labeled = labeled_logits.rows() > 0;
    const bool has_pseudo = pseudo_logits.rows() > 0;
    if (!has_labeled && !has_pseudo) throw ContractError("combined_loss: both parts empty");
    double loss = 0.0;
    if (has_labeled) loss += cross_entropy(labeled_logits, labeled_y);
    if (has_pseudo) loss += lambda * cross_entropy(pseudo_logits, pseudo_y);
    return loss;
}

Corpus oversample(const Corpus& labeled, SeededRng& rng) {
    if (labeled.empty()) throw DataError("oversample: empty corpus");
    std::array<std::vector<std::size_t>, 3> by_class;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const auto& rec = labeled.at(i);
        if (!rec.label) throw DataError("oversample: record '" + rec.id + "' is unlabeled");
        by_class[static_cast<std::size_t>(*rec.label - 1)].push_back(i);
    }
    std::size_t majority = 0;
    for (const auto& idx : by_class) majority = std::max(majority, idx.size());

    Corpus out({}, labeled.d_text(), labeled.d_image());
    for (const auto& rec : labeled.records()) out.append(rec);
    std::size_t dup_serial = 0;
    for (const auto& idx : by_class) {
        if (idx.empty()) continue;
        for (std::size_t need = idx.size(); need < majority; ++need) {
            EmbeddingRecord copy = labeled.at(idx[rng.next_below(idx.size())]);
            copy.id += "#dup" + std::to_string(dup_serial++);
            out.append(std::move(copy));
        }
    }
    return out;
}

std::pair<Matrix, Matrix> augment(const Matrix& batch_text, const Matrix& batch_image,
                                  double aug_sigma, double dropout_p, SeededRng& rng) {
    if (aug_sigma < 0.0) throw ConfigError("augment: aug_sigma must be >= 0");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("augment: dropout_p must lie in [0,1)");
    Matrix text = batch_text, image = batch_image;
    if (aug_sigma > 0.0) {
        for (double& v : text.data()) v += rng.normal(0.0, aug_sigma);
        for (double& v : image.data()) v += rng.normal(0.0, aug_sigma);
    }
    if (dropout_p > 0.0) {
        const double keep_scale = 1.0 / (1.0 - dropout_p);
        for (double& v : text.data()) v *= (rng.next_double() >= dropout_p) ? keep_scale : 0.0;
        for (double& v : image.data()) v *= (rng.next_double() >= dropout_p) ? keep_scale : 0.0;
    }
    return {std::move(text), std::move(image)};
}

namespace {

struct DenseView {
    Matrix text, image;
    std::vector<int> labels;
};

DenseView dense_view(const Corpus& c) {
    DenseView view;
    view.text = text_matrix(c);
    view.image = image_matrix(c);
    view.labels = labels_of(c);
    return view;
}

DenseView take_rows(const DenseView& all, const std::vector<std::size_t>& rows) {
    DenseView out;
    out.text = Matrix(rows.size(), all.text.cols());
    out.image = Matrix(rows.size(), all.image.cols());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(all.text.row_ptr(rows[i]), all.text.row_ptr(rows[i]) + all.text.cols(),
                  out.text.row_ptr(i));
        std::copy(all.image.row_ptr(rows[i]), all.image.row_ptr(rows[i]) + all.image.cols(),
                  out.image.row_ptr(i));
        out.labels[i] = all.labels[rows[i]];
    }
    return out;
}

// Batch boundaries over n samples; a trailing batch of 1 is merged into its
// predecessor so batch norm always sees at least 2 samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t start = 0; start < n; start += batch_size) {
        ranges.emplace_back(start, std::min(start + batch_size, n));
    }
    if (ranges.size() >= 2 && ranges.back().second - ranges.back().first == 1) {
        ranges[ranges.size() - 2].second = ranges.back().second;
        ranges.pop_back();
    }
    return ranges;
}

}  // namespace

FitReport fit(FusionModel& model, const Corpus& labeled, const Corpus* pseudo,
              const TrainConfig& cfg, SeededRng& rng) {
    cfg.validate();
    if (labeled.empty()) throw DataError("fit: empty labeled corpus");
    if (!labeled.all_have_images()) throw ModalityError("fit: labeled corpus is missing image vectors");
    auto counts = labeled.class_counts();
    for (int cls = 1; cls <= 3; ++cls) {
        if (counts[static_cast<std::size_t>(cls - 1)] == 0) {
            throw StratificationError("fit: class " + std::to_string(cls) +
                                      " is absent from the labeled set");
        }
    }
    if (pseudo && !pseudo->empty() && !pseudo->all_have_images()) {
        throw ModalityError("fit: pseudo corpus is missing image vectors");
    }

    SeededRng split_rng = rng.derive("val-split");
    SeededRng batch_rng = rng.derive("batching");
    SeededRng dropout_rng = rng.derive("dropout");
    SeededRng augment_rng = rng.derive("augment");
    SeededRng oversample_rng = rng.derive("oversample");

    // Stratified 10% validation split for the early-stopping monitor.
    std::vector<std::size_t> train_idx, val_idx;
    for (int cls = 1; cls <= 3; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            if (*labeled.at(i).label == cls) members.push_back(i);
        }
        split_rng.shuffle(members);
        std::size_t n_val = members.size() >= 2
                                ? std::max<std::size_t>(1, members.size() / 10)
                                : 0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < n_val ? val_idx : train_idx).push_back(members[i]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    Corpus train_corpus({}, labeled.d_text(), labeled.d_image());
    for (std::size_t i : train_idx) train_corpus.append(labeled.at(i));
    if (cfg.oversample) train_corpus = oversample(train_corpus, oversample_rng);

    DenseView train = dense_view(train_corpus);
    DenseView val;
    if (!val_idx.empty()) {
        DenseView all = dense_view(labeled);
        val = take_rows(all, val_idx);
    }

    DenseView pseudo_view;
    bool has_pseudo = pseudo && !pseudo->empty();
    if (has_pseudo) pseudo_view = dense_view(*pseudo);

    const std::size_t n_train = train.labels.size();
    if (n_train < 2) throw DataError("fit: need at least 2 training samples after the split");

    FitReport report;
    model.mode = RunMode::Train;
    OptimizerState opt = make_optimizer_state(cfg.optimizer, model);
    auto refs = model.param_refs();
    std::vector<Matrix*> params;
    for (auto& [name, t] : refs) params.push_back(t);

    FusionModel best_snapshot = model;
    double best_monitor = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_without_improvement = 0;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> pseudo_order;
    if (has_pseudo) {
        pseudo_order.resize(pseudo_view.labels.size());
        std::iota(pseudo_order.begin(), pseudo_order.end(), 0);
    }
    std::size_t pseudo_cursor = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = step_decay(cfg.lr, epoch, cfg.step_gamma, cfg.step_every);
        batch_rng.shuffle(order);
        if (has_pseudo) {
            batch_rng.shuffle(pseudo_order);
            pseudo_cursor = 0;
        }

        double labeled_loss_sum = 0.0, pseudo_loss_sum = 0.0;
        std::size_t labeled_seen = 0, pseudo_seen = 0;

        for (const auto& [start, end] : batch_ranges(n_train, cfg.batch_size)) {
            std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                          order.begin() + static_cast<long>(end));
            DenseView batch = take_rows(train, rows);
            if (cfg.aug_sigma > 0.0 || cfg.aug_mask_p > 0.0) {
                auto [t, im] = augment(batch.text, batch.image, cfg.aug_sigma, cfg.aug_mask_p,
                                       augment_rng);
                batch.text = std::move(t);
                batch.image = std::move(im);
            }

            ForwardOutput out = forward(model, batch.text, batch.image, dropout_rng);
            GradientSet grads = backward(model, out.cache, batch.labels);
            labeled_loss_sum += cross_entropy(out.logits, batch.labels) *
                                static_cast<double>(batch.labels.size());
            labeled_seen += batch.labels.size();

            if (has_pseudo) {
                // Cycle through the shuffled pseudo set, at least two samples
                // per forward; a single-record pool is doubled, which leaves
                // the mean loss unchanged.
                std::size_t want = std::min<std::size_t>(cfg.batch_size, pseudo_order.size());
                std::vector<std::size_t> prows;
                for (std::size_t i = 0; i < want; ++i) {
                    prows.push_back(pseudo_order[pseudo_cursor]);
                    pseudo_cursor = (pseudo_cursor + 1) % pseudo_order.size();
                }
                if (prows.size() == 1) prows.push_back(prows[0]);
                DenseView pbatch = take_rows(pseudo_view, prows);
                if (cfg.aug_sigma > 0.0 || cfg.aug_mask_p > 0.0) {
                    auto [t, im] = augment(pbatch.text, pbatch.image, cfg.aug_sigma, cfg.aug_mask_p,
                                           augment_rng);
                    pbatch.text = std::move(t);
                    pbatch.image = std::move(im);
                }
                ForwardOutput pout = forward(model, pbatch.text, pbatch.image, dropout_rng);
                GradientSet pgrads = backward(model, pout.cache, pbatch.labels);
                grads.add_scaled(pgrads, cfg.lambda);
                pseudo_loss_sum += cross_entropy(pout.logits, pbatch.labels) *
                                   static_cast<double>(pbatch.labels.size());
                pseudo_seen += pbatch.labels.size();
            }

            if (cfg.optimizer == OptimizerKind::Adam) {
                adam_step(params, grads, opt, lr, cfg.weight_decay);
            } else {
                adagrad_step(params, grads, opt, lr, cfg.weight_decay);
            }
        }

        double epoch_train_loss = labeled_loss_sum / static_cast<double>(labeled_seen);
        if (pseudo_seen > 0) {
            epoch_train_loss += cfg.lambda * pseudo_loss_sum / static_cast<double>(pseudo_seen);
        }
        report.train_loss.push_back(epoch_train_loss);

        double monitor;
        if (!val.labels.empty()) {
            model.mode = RunMode::Eval;
            SeededRng unused(0);
            ForwardOutput vout = forward(model, val.text, val.image, unused);
            double vloss = cross_entropy(vout.logits, val.labels);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < val.labels.size(); ++i) {
                const double* row = vout.probs.row_ptr(i);
                int best = 0;
                for (int c = 1; c < 3; ++c) {
                    if (row[c] > row[best]) best = c;
                }
                hits += (best + 1) == val.labels[i];
            }
            report.val_loss.push_back(vloss);
            report.val_accuracy.push_back(static_cast<double>(hits) /
                                          static_cast<double>(val.labels.size()));
            model.mode = RunMode::Train;
            monitor = vloss;
        } else {
            report.val_loss.push_back(epoch_train_loss);
            report.val_accuracy.push_back(0.0);
            monitor = epoch_train_loss;
        }

        report.stopped_epoch = epoch;
        if (monitor < best_monitor) {
            best_monitor = monitor;
            best_epoch = epoch;
            best_snapshot = model;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if (epochs_without_improvement > cfg.patience) break;
        }
    }

    model = std::move(best_snapshot);
    model.mode = RunMode::Eval;
    report.best_epoch = best_epoch;
    report.best_val_loss = best_monitor;
    return report;
}

}  // namespace fusionlab
