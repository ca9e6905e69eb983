#include "fusionlab/fusion_model.hpp"

#include <cmath>

#include "fusionlab/errors.hpp"

namespace fusionlab {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kLnEps = 1e-5;

}  // namespace

void ArchConfig::validate() const {
    if (d < 4) throw ConfigError("arch: hidden dim d must be >= 4");
    if (layers < 1 || heads < 1 || ff_mult < 1) throw ConfigError("arch: layers, heads, ff_mult must be >= 1");
    if (d % heads != 0) {
        throw ConfigError("arch: hidden dim " + std::to_string(d) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("arch: dropout must lie in [0,1)");
    if (d_text < 1 || d_image < 1) throw ConfigError("arch: input dims must be >= 1");
}

ArchConfig desk_preset(std::size_t d_text, std::size_t d_image) {
    ArchConfig cfg;
    cfg.d = 32;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.ff_mult = 4;
    cfg.dropout = 0.0;
    cfg.d_text = d_text;
    cfg.d_image = d_image;
    return cfg;
}

// --- parameter registry ------------------------------------------------------

namespace {

template <typename Model, typename MatrixPtr>
std::vector<std::pair<std::string, MatrixPtr>> collect_params(Model& m) {
    std::vector<std::pair<std::string, MatrixPtr>> refs;
    auto push = [&](const std::string& name, MatrixPtr t) { refs.emplace_back(name, t); };

    push("text_proj.w", &m.text_proj.w);
    push("text_proj.b", &m.text_proj.b);
    push("text_proj.bn_gamma", &m.text_proj.bn_gamma);
    push("text_proj.bn_beta", &m.text_proj.bn_beta);
    push("image_proj.w", &m.image_proj.w);
    push("image_proj.b", &m.image_proj.b);
    push("image_proj.bn_gamma", &m.image_proj.bn_gamma);
    push("image_proj.bn_beta", &m.image_proj.bn_beta);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        auto& lay = m.layers[l];
        push(p + "wq", &lay.wq);
        push(p + "wk", &lay.wk);
        push(p + "wv", &lay.wv);
        push(p + "wo", &lay.wo);
        push(p + "ff_w1", &lay.ff_w1);
        push(p + "ff_b1", &lay.ff_b1);
        push(p + "ff_w2", &lay.ff_w2);
        push(p + "ff_b2", &lay.ff_b2);
        push(p + "ln1_gamma", &lay.ln1_gamma);
        push(p + "ln1_beta", &lay.ln1_beta);
        push(p + "ln2_gamma", &lay.ln2_gamma);
        push(p + "ln2_beta", &lay.ln2_beta);
    }
    push("head.w1", &m.head.w1);
    push("head.b1", &m.head.b1);
    push("head.bn1_gamma", &m.head.bn1_gamma);
    push("head.bn1_beta", &m.head.bn1_beta);
    push("head.w2", &m.head.w2);
    push("head.b2", &m.head.b2);
    push("head.bn2_gamma", &m.head.bn2_gamma);
    push("head.bn2_beta", &m.head.bn2_beta);
    push("head.w3", &m.head.w3);
    push("head.b3", &m.head.b3);
    return refs;
}

template <typename Model, typename MatrixPtr>
std::vector<std::pair<std::string, MatrixPtr>> collect_state(Model& m) {
    std::vector<std::pair<std::string, MatrixPtr>> refs;
    refs.emplace_back("text_proj.bn_running_mean", &m.text_proj.bn_running_mean);
    refs.emplace_back("text_proj.bn_running_var", &m.text_proj.bn_running_var);
    refs.emplace_back("image_proj.bn_running_mean", &m.image_proj.bn_running_mean);
    refs.emplace_back("image_proj.bn_running_var", &m.image_proj.bn_running_var);
    refs.emplace_back("head.bn1_running_mean", &m.head.bn1_running_mean);
    refs.emplace_back("head.bn1_running_var", &m.head.bn1_running_var);
    refs.emplace_back("head.bn2_running_mean", &m.head.bn2_running_mean);
    refs.emplace_back("head.bn2_running_var", &m.head.bn2_running_var);
    return refs;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> FusionModel::param_refs() {
    return collect_params<FusionModel, Matrix*>(*this);
}

std::vector<std::pair<std::string, const Matrix*>> FusionModel::param_refs() const {
    return collect_params<const FusionModel, const Matrix*>(*this);
}

std::vector<std::pair<std::string, Matrix*>> FusionModel::state_refs() {
    return collect_state<FusionModel, Matrix*>(*this);
}

std::vector<std::pair<std::string, const Matrix*>> FusionModel::state_refs() const {
    return collect_state<const FusionModel, const Matrix*>(*this);
}

std::size_t FusionModel::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : param_refs()) n += t->size();
    return n;
}

GradientSet::GradientSet(const FusionModel& m) {
    for (const auto& [name, t] : m.param_refs()) tensors.emplace_back(t->rows(), t->cols());
}

void GradientSet::add_scaled(const GradientSet& other, double scale) {
    if (tensors.size() != other.tensors.size()) throw ShapeError("GradientSet: mismatched layouts");
    for (std::size_t i = 0; i < tensors.size(); ++i) axpy_inplace(tensors[i], scale, other.tensors[i]);
}

// --- init --------------------------------------------------------------------

FusionModel init_model(const ArchConfig& cfg, SeededRng& rng) {
    cfg.validate();
    FusionModel m;
    m.cfg = cfg;
    m.mode = RunMode::Eval;

    auto vec = [&](std::size_t n, double fill) { return Matrix(1, n, fill); };
    auto init_proj = [&](ProjectionLayer& p, std::size_t d_in) {
        p.w = xavier_init(d_in, cfg.d, rng);
        p.b = vec(cfg.d, 0.0);
        p.bn_gamma = vec(cfg.d, 1.0);
        p.bn_beta = vec(cfg.d, 0.0);
        p.bn_running_mean = vec(cfg.d, 0.0);
        p.bn_running_var = vec(cfg.d, 1.0);
    };
    init_proj(m.text_proj, cfg.d_text);
    init_proj(m.image_proj, cfg.d_image);

    m.layers.resize(cfg.layers);
    for (auto& lay : m.layers) {
        lay.wq = xavier_init(cfg.d, cfg.d, rng);
        lay.wk = xavier_init(cfg.d, cfg.d, rng);
        lay.wv = xavier_init(cfg.d, cfg.d, rng);
        lay.wo = xavier_init(cfg.d, cfg.d, rng);
        lay.ff_w1 = xavier_init(cfg.d, cfg.ff_dim(), rng);
        lay.ff_b1 = vec(cfg.ff_dim(), 0.0);
        lay.ff_w2 = xavier_init(cfg.ff_dim(), cfg.d, rng);
        lay.ff_b2 = vec(cfg.d, 0.0);
        lay.ln1_gamma = vec(cfg.d, 1.0);
        lay.ln1_beta = vec(cfg.d, 0.0);
        lay.ln2_gamma = vec(cfg.d, 1.0);
        lay.ln2_beta = vec(cfg.d, 0.0);
    }

    m.head.w1 = xavier_init(2 * cfg.d, cfg.head_h1(), rng);
    m.head.b1 = vec(cfg.head_h1(), 0.0);
    m.head.bn1_gamma = vec(cfg.head_h1(), 1.0);
    m.head.bn1_beta = vec(cfg.head_h1(), 0.0);
    m.head.bn1_running_mean = vec(cfg.head_h1(), 0.0);
    m.head.bn1_running_var = vec(cfg.head_h1(), 1.0);
    m.head.w2 = xavier_init(cfg.head_h1(), cfg.head_h2(), rng);
    m.head.b2 = vec(cfg.head_h2(), 0.0);
    m.head.bn2_gamma = vec(cfg.head_h2(), 1.0);
    m.head.bn2_beta = vec(cfg.head_h2(), 0.0);
    m.head.bn2_running_mean = vec(cfg.head_h2(), 0.0);
    m.head.bn2_running_var = vec(cfg.head_h2(), 1.0);
    m.head.w3 = xavier_init(cfg.head_h2(), ArchConfig::kClasses, rng);
    m.head.b3 = vec(ArchConfig::kClasses, 0.0);
    return m;
}

// --- shared sub-blocks ---------------------------------------------------------

namespace {

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix out = matmul(x, w);
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b(0, c);
    return out;
}

// Batch norm over the batch dimension.  Train mode uses population batch
// statistics and refreshes the running estimates in place.
Matrix bn_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta, Matrix& running_mean,
                  Matrix& running_var, RunMode mode, BnCache& cache) {
    const std::size_t b = x.rows(), w = x.cols();
    cache.batch_stats = (mode == RunMode::Train);
    cache.mean.assign(w, 0.0);
    cache.var.assign(w, 0.0);
    if (cache.batch_stats) {
        for (std::size_t j = 0; j < w; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < b; ++i) mean += x(i, j);
            mean /= static_cast<double>(b);
            double var = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                double d = x(i, j) - mean;
                var += d * d;
            }
            var /= static_cast<double>(b);
            cache.mean[j] = mean;
            cache.var[j] = var;
            running_mean(0, j) = (1.0 - kBnMomentum) * running_mean(0, j) + kBnMomentum * mean;
            running_var(0, j) = (1.0 - kBnMomentum) * running_var(0, j) + kBnMomentum * var;
        }
    } else {
        for (std::size_t j = 0; j < w; ++j) {
            cache.mean[j] = running_mean(0, j);
            cache.var[j] = running_var(0, j);
        }
    }

    cache.xhat = Matrix(b, w);
    Matrix out(b, w);
    for (std::size_t j = 0; j < w; ++j) {
        double inv = 1.0 / std::sqrt(cache.var[j] + kBnEps);
        for (std::size_t i = 0; i < b; ++i) {
            double xh = (x(i, j) - cache.mean[j]) * inv;
            cache.xhat(i, j) = xh;
            out(i, j) = gamma(0, j) * xh + beta(0, j);
        }
    }
    return out;
}

// Returns dx; accumulates dgamma/dbeta.
Matrix bn_backward(const Matrix& dout, const BnCache& cache, const Matrix& gamma, Matrix& dgamma,
                   Matrix& dbeta) {
    const std::size_t b = dout.rows(), w = dout.cols();
    Matrix dx(b, w);
    for (std::size_t j = 0; j < w; ++j) {
        double inv = 1.0 / std::sqrt(cache.var[j] + kBnEps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            sum_dy += dout(i, j);
            sum_dy_xhat += dout(i, j) * cache.xhat(i, j);
        }
        dgamma(0, j) += sum_dy_xhat;
        dbeta(0, j) += sum_dy;
        if (cache.batch_stats) {
            double n = static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                double dxhat = dout(i, j) * gamma(0, j);
                dx(i, j) = inv / n *
                           (n * dxhat - gamma(0, j) * sum_dy -
                            cache.xhat(i, j) * gamma(0, j) * sum_dy_xhat);
            }
        } else {
            for (std::size_t i = 0; i < b; ++i) dx(i, j) = dout(i, j) * gamma(0, j) * inv;
        }
    }
    return dx;
}

Matrix dropout_forward(const Matrix& x, double p, RunMode mode, SeededRng& rng, DropoutCache& cache) {
    if (mode != RunMode::Train || p <= 0.0) {
        cache.active = false;
        return x;
    }
    cache.active = true;
    cache.mask = Matrix(x.rows(), x.cols());
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double m = (rng.next_double() >= p) ? keep_scale : 0.0;
        cache.mask.data()[i] = m;
        out.data()[i] = x.data()[i] * m;
    }
    return out;
}

Matrix dropout_backward(const Matrix& dout, const DropoutCache& cache) {
    if (!cache.active) return dout;
    return hadamard(dout, cache.mask);
}

Matrix ln_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta, LnCache& cache) {
    const std::size_t rows = x.rows(), w = x.cols();
    cache.xhat = Matrix(rows, w);
    cache.inv_std.assign(rows, 0.0);
    Matrix out(rows, w);
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < w; ++c) mean += x(r, c);
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t c = 0; c < w; ++c) {
            double d = x(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(w);
        double inv = 1.0 / std::sqrt(var + kLnEps);
        cache.inv_std[r] = inv;
        for (std::size_t c = 0; c < w; ++c) {
            double xh = (x(r, c) - mean) * inv;
            cache.xhat(r, c) = xh;
            out(r, c) = gamma(0, c) * xh + beta(0, c);
        }
    }
    return out;
}

Matrix ln_backward(const Matrix& dout, const LnCache& cache, const Matrix& gamma, Matrix& dgamma,
                   Matrix& dbeta) {
    const std::size_t rows = dout.rows(), w = dout.cols();
    Matrix dx(rows, w);
    for (std::size_t r = 0; r < rows; ++r) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t c = 0; c < w; ++c) {
            double dxhat = dout(r, c) * gamma(0, c);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * cache.xhat(r, c);
            dgamma(0, c) += dout(r, c) * cache.xhat(r, c);
            dbeta(0, c) += dout(r, c);
        }
        double n = static_cast<double>(w);
        for (std::size_t c = 0; c < w; ++c) {
            double dxhat = dout(r, c) * gamma(0, c);
            dx(r, c) = cache.inv_std[r] / n * (n * dxhat - sum_dxhat - cache.xhat(r, c) * sum_dxhat_xhat);
        }
    }
    return dx;
}

Matrix project_tokens(const ProjectionLayer& proj, Matrix& running_mean, Matrix& running_var,
                      const Matrix& input, double dropout, RunMode mode, SeededRng& rng,
                      ProjCache& cache) {
    cache.lin = linear(input, proj.w, proj.b);
    cache.bn_out = bn_forward(cache.lin, proj.bn_gamma, proj.bn_beta, running_mean, running_var,
                              mode, cache.bn);
    Matrix act = gelu(cache.bn_out);
    cache.tokens = dropout_forward(act, dropout, mode, rng, cache.drop);
    return cache.tokens;
}

}  // namespace

// --- forward -------------------------------------------------------------------

ForwardOutput forward(FusionModel& m, const Matrix& batch_text, const Matrix& batch_image,
                      SeededRng& rng) {
    const ArchConfig& cfg = m.cfg;
    const std::size_t b = batch_text.rows();
    if (b == 0) throw DataError("forward: empty batch");
    if (batch_image.rows() != b) {
        throw ShapeError("forward: text batch " + batch_text.shape_str() + " vs image batch " +
                         batch_image.shape_str());
    }
    if (batch_text.cols() != cfg.d_text || batch_image.cols() != cfg.d_image) {
        throw ShapeError("forward: input widths " + batch_text.shape_str() + "/" +
                         batch_image.shape_str() + " do not match config " +
                         std::to_string(cfg.d_text) + "/" + std::to_string(cfg.d_image));
    }
    if (m.mode == RunMode::Train && b < 2) {
        throw DataError("forward: train mode needs a batch of at least 2 for batch norm");
    }

    ForwardCache cache;
    cache.batch = b;
    cache.mode = m.mode;
    cache.input_text = batch_text;
    cache.input_image = batch_image;

    Matrix text_tokens = project_tokens(m.text_proj, m.text_proj.bn_running_mean,
                                        m.text_proj.bn_running_var, batch_text, cfg.dropout, m.mode,
                                        rng, cache.text_proj);
    Matrix image_tokens = project_tokens(m.image_proj, m.image_proj.bn_running_mean,
                                         m.image_proj.bn_running_var, batch_image, cfg.dropout,
                                         m.mode, rng, cache.image_proj);

    const std::size_t d = cfg.d;
    const std::size_t dk = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    cache.samples.resize(b);
    Matrix fused(b, 2 * d);
    for (std::size_t i = 0; i < b; ++i) {
        // Fixed token order [text; image]; modality identity comes from the
        // distinct projections, not positional signals.
        Matrix x(2, d);
        for (std::size_t c = 0; c < d; ++c) {
            x(0, c) = text_tokens(i, c);
            x(1, c) = image_tokens(i, c);
        }

        cache.samples[i].resize(cfg.layers);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            LayerCache& lc = cache.samples[i][l];
            const EncoderLayer& lay = m.layers[l];
            lc.x_in = x;

            lc.q = matmul(x, lay.wq);
            lc.k = matmul(x, lay.wk);
            lc.v = matmul(x, lay.wv);

            lc.attn.resize(cfg.heads);
            lc.context = Matrix(2, d);
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                const std::size_t h0 = h * dk;
                Matrix scores(2, 2);
                for (std::size_t a = 0; a < 2; ++a)
                    for (std::size_t t = 0; t < 2; ++t) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < dk; ++c) s += lc.q(a, h0 + c) * lc.k(t, h0 + c);
                        scores(a, t) = s * scale;
                    }
                lc.attn[h] = softmax_rows(scores);
                for (std::size_t a = 0; a < 2; ++a)
                    for (std::size_t c = 0; c < dk; ++c) {
                        lc.context(a, h0 + c) = lc.attn[h](a, 0) * lc.v(0, h0 + c) +
                                                lc.attn[h](a, 1) * lc.v(1, h0 + c);
                    }
            }

            Matrix attn_out = matmul(lc.context, lay.wo);
            Matrix attn_dropped = dropout_forward(attn_out, cfg.dropout, m.mode, rng, lc.attn_drop);
            lc.residual1 = add(x, attn_dropped);
            lc.ln1_out = ln_forward(lc.residual1, lay.ln1_gamma, lay.ln1_beta, lc.ln1);

            lc.ff_pre = linear(lc.ln1_out, lay.ff_w1, lay.ff_b1);
            Matrix ff_out = linear(gelu(lc.ff_pre), lay.ff_w2, lay.ff_b2);
            Matrix ff_dropped = dropout_forward(ff_out, cfg.dropout, m.mode, rng, lc.ff_drop);
            lc.residual2 = add(lc.ln1_out, ff_dropped);
            lc.out = ln_forward(lc.residual2, lay.ln2_gamma, lay.ln2_beta, lc.ln2);
            x = lc.out;
        }

        for (std::size_t c = 0; c < d; ++c) {
            fused(i, c) = x(0, c);
            fused(i, d + c) = x(1, c);
        }
    }

    HeadCache& hc = cache.head;
    hc.fused = std::move(fused);
    hc.lin1 = linear(hc.fused, m.head.w1, m.head.b1);
    hc.act1 = gelu(hc.lin1);
    Matrix bn1_out = bn_forward(hc.act1, m.head.bn1_gamma, m.head.bn1_beta,
                                m.head.bn1_running_mean, m.head.bn1_running_var, m.mode, hc.bn1);
    hc.h1 = dropout_forward(bn1_out, cfg.dropout, m.mode, rng, hc.drop1);
    hc.lin2 = linear(hc.h1, m.head.w2, m.head.b2);
    hc.act2 = gelu(hc.lin2);
    Matrix bn2_out = bn_forward(hc.act2, m.head.bn2_gamma, m.head.bn2_beta,
                                m.head.bn2_running_mean, m.head.bn2_running_var, m.mode, hc.bn2);
    hc.h2 = dropout_forward(bn2_out, cfg.dropout, m.mode, rng, hc.drop2);
    cache.logits = linear(hc.h2, m.head.w3, m.head.b3);
    cache.probs = softmax_rows(cache.logits);

    ForwardOutput out;
    out.probs = cache.probs;
    out.logits = cache.logits;
    out.cache = std::move(cache);
    return out;
}

// --- backward ------------------------------------------------------------------

namespace {

// dW += x^T dy, db += column sums of dy, returns dy W^T.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db) {
    add_inplace(dw, matmul(transpose(x), dy));
    for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) db(0, c) += dy(r, c);
    return matmul(dy, transpose(w));
}

Matrix linear_backward_no_bias(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw) {
    add_inplace(dw, matmul(transpose(x), dy));
    return matmul(dy, transpose(w));
}

}  // namespace

GradientSet backward(const FusionModel& m, const ForwardCache& cache, const std::vector<int>& labels) {
    const ArchConfig& cfg = m.cfg;
    const std::size_t b = cache.batch;
    if (labels.size() != b) {
        throw ContractError("backward: cache batch " + std::to_string(b) + " vs labels " +
                            std::to_string(labels.size()));
    }
    for (int y : labels) {
        if (y < 1 || y > 3) throw DataError("backward: label outside {1,2,3}");
    }

    GradientSet grads(m);
    auto refs = m.param_refs();
    auto grad_of = [&](const std::string& name) -> Matrix& {
        for (std::size_t i = 0; i < refs.size(); ++i) {
            if (refs[i].first == name) return grads.tensors[i];
        }
        throw ContractError("backward: unknown parameter " + name);
    };

    // Fused softmax + cross-entropy: dlogits = (probs - onehot) / B.
    Matrix dlogits = cache.probs;
    for (std::size_t i = 0; i < b; ++i) dlogits(i, static_cast<std::size_t>(labels[i] - 1)) -= 1.0;
    scale_inplace(dlogits, 1.0 / static_cast<double>(b));

    // Head.
    const HeadCache& hc = cache.head;
    Matrix dh2 = linear_backward(hc.h2, m.head.w3, dlogits, grad_of("head.w3"), grad_of("head.b3"));
    Matrix dbn2_out = dropout_backward(dh2, hc.drop2);
    Matrix dact2 = bn_backward(dbn2_out, hc.bn2, m.head.bn2_gamma, grad_of("head.bn2_gamma"),
                               grad_of("head.bn2_beta"));
    Matrix dlin2 = hadamard(dact2, gelu_grad(hc.lin2));
    Matrix dh1 = linear_backward(hc.h1, m.head.w2, dlin2, grad_of("head.w2"), grad_of("head.b2"));
    Matrix dbn1_out = dropout_backward(dh1, hc.drop1);
    Matrix dact1 = bn_backward(dbn1_out, hc.bn1, m.head.bn1_gamma, grad_of("head.bn1_gamma"),
                               grad_of("head.bn1_beta"));
    Matrix dlin1 = hadamard(dact1, gelu_grad(hc.lin1));
    Matrix dfused = linear_backward(hc.fused, m.head.w1, dlin1, grad_of("head.w1"), grad_of("head.b1"));

    // Encoder, sample by sample.
    const std::size_t d = cfg.d;
    const std::size_t dk = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Matrix dtext_tokens(b, d), dimage_tokens(b, d);

    for (std::size_t i = 0; i < b; ++i) {
        Matrix dx(2, d);
        for (std::size_t c = 0; c < d; ++c) {
            dx(0, c) = dfused(i, c);
            dx(1, c) = dfused(i, d + c);
        }

        for (std::size_t l = cfg.layers; l-- > 0;) {
            const LayerCache& lc = cache.samples[i][l];
            const EncoderLayer& lay = m.layers[l];
            std::string p = "layer" + std::to_string(l) + ".";

            // LN2 then the feed-forward sublayer.
            Matrix dres2 = ln_backward(dx, lc.ln2, lay.ln2_gamma, grad_of(p + "ln2_gamma"),
                                       grad_of(p + "ln2_beta"));
            Matrix dff_out = dropout_backward(dres2, lc.ff_drop);
            Matrix ff_act = gelu(lc.ff_pre);
            Matrix dff_act =
                linear_backward(ff_act, lay.ff_w2, dff_out, grad_of(p + "ff_w2"), grad_of(p + "ff_b2"));
            Matrix dff_pre = hadamard(dff_act, gelu_grad(lc.ff_pre));
            Matrix dln1_out = linear_backward(lc.ln1_out, lay.ff_w1, dff_pre, grad_of(p + "ff_w1"),
                                              grad_of(p + "ff_b1"));
            add_inplace(dln1_out, dres2);  // residual branch around the FF sublayer

            // LN1 then the attention sublayer.
            Matrix dres1 = ln_backward(dln1_out, lc.ln1, lay.ln1_gamma, grad_of(p + "ln1_gamma"),
                                       grad_of(p + "ln1_beta"));
            Matrix dattn_out = dropout_backward(dres1, lc.attn_drop);
            Matrix dcontext = linear_backward_no_bias(lc.context, lay.wo, dattn_out, grad_of(p + "wo"));

            Matrix dq(2, d), dkm(2, d), dv(2, d);
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                const std::size_t h0 = h * dk;
                const Matrix& a = lc.attn[h];
                Matrix da(2, 2);
                for (std::size_t r = 0; r < 2; ++r)
                    for (std::size_t t = 0; t < 2; ++t) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < dk; ++c) s += dcontext(r, h0 + c) * lc.v(t, h0 + c);
                        da(r, t) = s;
                    }
                for (std::size_t t = 0; t < 2; ++t)
                    for (std::size_t c = 0; c < dk; ++c) {
                        dv(t, h0 + c) = a(0, t) * dcontext(0, h0 + c) + a(1, t) * dcontext(1, h0 + c);
                    }
                // Softmax rows backward, then the 1/sqrt(dk) score scale.
                for (std::size_t r = 0; r < 2; ++r) {
                    double dot = da(r, 0) * a(r, 0) + da(r, 1) * a(r, 1);
                    for (std::size_t t = 0; t < 2; ++t) {
                        double ds = a(r, t) * (da(r, t) - dot) * scale;
                        for (std::size_t c = 0; c < dk; ++c) {
                            dq(r, h0 + c) += ds * lc.k(t, h0 + c);
                            dkm(t, h0 + c) += ds * lc.q(r, h0 + c);
                        }
                    }
                }
            }

            Matrix dx_next = dres1;  // residual branch around attention
            add_inplace(dx_next, linear_backward_no_bias(lc.x_in, lay.wq, dq, grad_of(p + "wq")));
            add_inplace(dx_next, linear_backward_no_bias(lc.x_in, lay.wk, dkm, grad_of(p + "wk")));
            add_inplace(dx_next, linear_backward_no_bias(lc.x_in, lay.wv, dv, grad_of(p + "wv")));
            dx = std::move(dx_next);
        }

        for (std::size_t c = 0; c < d; ++c) {
            dtext_tokens(i, c) = dx(0, c);
            dimage_tokens(i, c) = dx(1, c);
        }
    }

    // Projections.
    auto proj_backward = [&](const ProjectionLayer& proj, const ProjCache& pc, const Matrix& input,
                             const Matrix& dtokens, const std::string& prefix) {
        Matrix dact = dropout_backward(dtokens, pc.drop);
        Matrix dbn_out = hadamard(dact, gelu_grad(pc.bn_out));
        Matrix dlin = bn_backward(dbn_out, pc.bn, proj.bn_gamma, grad_of(prefix + ".bn_gamma"),
                                  grad_of(prefix + ".bn_beta"));
        linear_backward(input, proj.w, dlin, grad_of(prefix + ".w"), grad_of(prefix + ".b"));
    };
    proj_backward(m.text_proj, cache.text_proj, cache.input_text, dtext_tokens, "text_proj");
    proj_backward(m.image_proj, cache.image_proj, cache.input_image, dimage_tokens, "image_proj");

    return grads;
}

// --- predict -------------------------------------------------------------------

PredictOutput predict(const FusionModel& m, const Corpus& corpus) {
    if (m.mode != RunMode::Eval) throw ContractError("predict: model must be in eval mode");
    if (corpus.empty()) return {};
    if (!corpus.all_have_images()) {
        throw ModalityError("predict: corpus has records without image vectors");
    }

    // Eval-mode forward never mutates the model (running stats untouched,
    // dropout off), so the const_cast below is safe.
    Matrix text = text_matrix(corpus);
    Matrix image = image_matrix(corpus);
    SeededRng unused(0);
    ForwardOutput out = forward(const_cast<FusionModel&>(m), text, image, unused);

    PredictOutput result;
    result.probs = std::move(out.probs);
    result.labels.resize(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const double* row = result.probs.row_ptr(i);
        int best = 0;
        for (int c = 1; c < 3; ++c) {
            if (row[c] > row[best]) best = c;
        }
        result.labels[i] = best + 1;
    }
    return result;
}

}  // namespace fusionlab
