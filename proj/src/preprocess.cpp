#include "fusionlab/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionlab/errors.hpp"

namespace fusionlab {

namespace {

void column_stats(const std::vector<const std::vector<double>*>& rows, std::size_t d,
                  std::vector<double>& means, std::vector<double>& stds) {
    means.assign(d, 0.0);
    stds.assign(d, 0.0);
    const double n = static_cast<double>(rows.size());
    for (const auto* row : rows)
        for (std::size_t j = 0; j < d; ++j) means[j] += (*row)[j];
    for (std::size_t j = 0; j < d; ++j) means[j] /= n;
    for (const auto* row : rows)
        for (std::size_t j = 0; j < d; ++j) {
            double dlt = (*row)[j] - means[j];
            stds[j] += dlt * dlt;
        }
    for (std::size_t j = 0; j < d; ++j) stds[j] = std::sqrt(stds[j] / n);
}

std::vector<const std::vector<double>*> text_rows(const Corpus& c) {
    std::vector<const std::vector<double>*> rows;
    rows.reserve(c.size());
    for (const auto& r : c.records()) rows.push_back(&r.text_vec);
    return rows;
}

std::vector<const std::vector<double>*> image_rows(const Corpus& c) {
    std::vector<const std::vector<double>*> rows;
    for (const auto& r : c.records())
        if (r.image_vec) rows.push_back(&*r.image_vec);
    return rows;
}

void apply_columns(std::vector<double>& v, const std::vector<double>& means,
                   const std::vector<double>& stds) {
    if (v.size() != means.size()) {
        throw ShapeError("standardize: vector width " + std::to_string(v.size()) +
                         " does not match fitted width " + std::to_string(means.size()));
    }
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (stds[j] > 0.0) v[j] = (v[j] - means[j]) / stds[j];
    }
}

}  // namespace

Standardizer standardize_fit(const Corpus& c, FeatureSelect which) {
    Standardizer s;
    s.which = which;
    if (c.size() < 2) throw DataError("standardize_fit: need at least 2 records");
    if (which == FeatureSelect::Text || which == FeatureSelect::Both) {
        column_stats(text_rows(c), c.d_text(), s.text_means, s.text_stds);
    }
    if (which == FeatureSelect::Image || which == FeatureSelect::Both) {
        auto rows = image_rows(c);
        if (rows.size() < 2) throw DataError("standardize_fit: need at least 2 records with images");
        column_stats(rows, c.d_image(), s.image_means, s.image_stds);
    }
    return s;
}

Corpus standardize_apply(const Standardizer& s, const Corpus& c) {
    Corpus out({}, c.d_text(), c.d_image());
    for (auto rec : c.records()) {
        if (!s.text_means.empty()) apply_columns(rec.text_vec, s.text_means, s.text_stds);
        if (!s.image_means.empty() && rec.image_vec) {
            apply_columns(*rec.image_vec, s.image_means, s.image_stds);
        }
        out.append(std::move(rec));
    }
    return out;
}

void jacobi_eigh(const Matrix& sym, std::vector<double>& eigenvalues, Matrix& eigenvectors_rows) {
    const std::size_t d = sym.rows();
    if (sym.cols() != d) throw ShapeError("jacobi_eigh: matrix must be square, got " + sym.shape_str());

    Matrix a = sym;
    Matrix v(d, d);
    for (std::size_t i = 0; i < d; ++i) v(i, i) = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) s += a(p, q) * a(p, q);
        return std::sqrt(2.0 * s);
    };

    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max(scale, std::abs(a.data()[i]));
    const double tol = (scale > 0 ? scale : 1.0) * 1e-14 * static_cast<double>(d);

    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double apq = a(p, q);
                if (std::abs(apq) <= tol * 1e-3) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double cos_r = 1.0 / std::sqrt(t * t + 1.0);
                double sin_r = t * cos_r;
                for (std::size_t i = 0; i < d; ++i) {
                    double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = cos_r * aip - sin_r * aiq;
                    a(i, q) = sin_r * aip + cos_r * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    double api = a(p, i), aqi = a(q, i);
                    a(p, i) = cos_r * api - sin_r * aqi;
                    a(q, i) = sin_r * api + cos_r * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    double vip = v(i, p), viq = v(i, q);
                    v(i, p) = cos_r * vip - sin_r * viq;
                    v(i, q) = sin_r * vip + cos_r * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(d);
    for (std::size_t i = 0; i < d; ++i) diag[i] = a(i, i);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (diag[x] != diag[y]) return diag[x] > diag[y];
        return x < y;
    });

    eigenvalues.assign(d, 0.0);
    eigenvectors_rows = Matrix(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        eigenvalues[r] = std::max(0.0, diag[order[r]]);
        for (std::size_t i = 0; i < d; ++i) eigenvectors_rows(r, i) = v(i, order[r]);
    }
}

PcaModel pca_fit(const Corpus& c, FeatureSelect which, std::size_t k) {
    if (which == FeatureSelect::Both) throw ConfigError("pca_fit: select text or image, not both");
    auto rows = (which == FeatureSelect::Text) ? text_rows(c) : image_rows(c);
    const std::size_t d = (which == FeatureSelect::Text) ? c.d_text() : c.d_image();
    if (k == 0 || k > d) {
        throw ConfigError("pca_fit: k=" + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
    }
    if (rows.size() < k + 1) {
        throw DataError("pca_fit: need at least k+1=" + std::to_string(k + 1) + " records, have " +
                        std::to_string(rows.size()));
    }

    const double n = static_cast<double>(rows.size());
    std::vector<double> mean(d, 0.0);
    for (const auto* row : rows)
        for (std::size_t j = 0; j < d; ++j) mean[j] += (*row)[j];
    for (double& m : mean) m /= n;

    Matrix cov(d, d);
    for (const auto* row : rows) {
        for (std::size_t i = 0; i < d; ++i) {
            double di = (*row)[i] - mean[i];
            for (std::size_t j = i; j < d; ++j) {
                cov(i, j) += di * ((*row)[j] - mean[j]);
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= n;
            cov(j, i) = cov(i, j);
        }

    std::vector<double> eigenvalues;
    Matrix vectors;
    jacobi_eigh(cov, eigenvalues, vectors);

    PcaModel model;
    model.which = which;
    model.mean = std::move(mean);
    model.explained_variance.assign(eigenvalues.begin(), eigenvalues.begin() + static_cast<long>(k));
    model.components = Matrix(k, d);
    for (std::size_t r = 0; r < k; ++r) {
        // Sign convention: first entry with magnitude above threshold positive.
        double sign = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (std::abs(vectors(r, j)) > 1e-12) {
                sign = vectors(r, j) > 0 ? 1.0 : -1.0;
                break;
            }
        }
        for (std::size_t j = 0; j < d; ++j) model.components(r, j) = sign * vectors(r, j);
    }
    return model;
}

Corpus pca_transform(const PcaModel& p, const Corpus& c) {
    const std::size_t d = p.components.cols();
    const std::size_t k = p.components.rows();
    const bool text = p.which == FeatureSelect::Text;
    if ((text ? c.d_text() : c.d_image()) != d) {
        throw ShapeError("pca_transform: corpus width " +
                         std::to_string(text ? c.d_text() : c.d_image()) +
                         " does not match model width " + std::to_string(d));
    }

    auto project = [&](const std::vector<double>& v) {
        std::vector<double> out(k, 0.0);
        for (std::size_t r = 0; r < k; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += p.components(r, j) * (v[j] - p.mean[j]);
            out[r] = s;
        }
        return out;
    };

    Corpus out({}, text ? k : c.d_text(), text ? c.d_image() : k);
    for (auto rec : c.records()) {
        if (text) {
            rec.text_vec = project(rec.text_vec);
        } else if (rec.image_vec) {
            rec.image_vec = project(*rec.image_vec);
        }
        out.append(std::move(rec));
    }
    return out;
}

Corpus perturb_gaussian(const Corpus& c, FeatureSelect which, double sigma, SeededRng& rng) {
    if (sigma < 0.0) throw ConfigError("perturb_gaussian: sigma must be >= 0");
    Corpus out({}, c.d_text(), c.d_image());
    for (auto rec : c.records()) {
        if (sigma > 0.0) {
            if (which == FeatureSelect::Text || which == FeatureSelect::Both) {
                for (double& v : rec.text_vec) v += rng.normal(0.0, sigma);
            }
            if ((which == FeatureSelect::Image || which == FeatureSelect::Both) && rec.image_vec) {
                for (double& v : *rec.image_vec) v += rng.normal(0.0, sigma);
            }
        }
        out.append(std::move(rec));
    }
    return out;
}

SyntheticCorpus generate_synthetic_with_truth(const SynthConfig& cfg) {
    if (cfg.separation <= 0.0) throw ConfigError("synth: separation must be > 0");
    if (cfg.noise_sigma <= 0.0) throw ConfigError("synth: noise sigma must be > 0");
    if (cfg.d_text < 2 || cfg.d_image < 2) throw ConfigError("synth: d_text and d_image must be >= 2");
    if (cfg.labeled_fraction < 0.0 || cfg.labeled_fraction > 1.0) {
        throw ConfigError("synth: labeled fraction must lie in [0,1]");
    }
    if (cfg.n_per_class == 0) throw ConfigError("synth: n_per_class must be >= 1");

    SeededRng root(cfg.seed);
    SeededRng draw = root.derive("synth-draw");
    SeededRng hide = root.derive("synth-hide");

    const double a = cfg.separation;
    SyntheticCorpus out;
    out.corpus = Corpus({}, cfg.d_text, cfg.d_image);

    std::size_t serial = 0;
    for (int cls = 1; cls <= 3; ++cls) {
        for (std::size_t i = 0; i < cfg.n_per_class; ++i) {
            EmbeddingRecord rec;
            char buf[24];
            std::snprintf(buf, sizeof(buf), "s%05zu", ++serial);
            rec.id = buf;
            rec.label = cls;

            // Text: class 1 at +a along e1, classes 2 and 3 at -a.
            double text_shift = (cls == 1) ? a : -a;
            rec.text_vec.resize(cfg.d_text);
            for (std::size_t j = 0; j < cfg.d_text; ++j) {
                rec.text_vec[j] = (j == 0 ? text_shift : 0.0) + draw.normal(0.0, cfg.noise_sigma);
            }

            // Image: class 2 at +a, class 3 at -a; class 1 borrows either
            // image cluster with probability 1/2, so images never identify it.
            double image_shift;
            if (cls == 2) {
                image_shift = a;
            } else if (cls == 3) {
                image_shift = -a;
            } else {
                image_shift = (draw.next_double() < 0.5) ? a : -a;
            }
            std::vector<double> img(cfg.d_image);
            for (std::size_t j = 0; j < cfg.d_image; ++j) {
                img[j] = (j == 0 ? image_shift : 0.0) + draw.normal(0.0, cfg.noise_sigma);
            }
            rec.image_vec = std::move(img);

            out.true_labels.push_back(cls);
            out.corpus.append(std::move(rec));
        }
    }

    // Hide labels on a (1 - labeled_fraction) share, uniformly per class.
    std::size_t n_hidden =
        static_cast<std::size_t>(std::llround((1.0 - cfg.labeled_fraction) *
                                              static_cast<double>(cfg.n_per_class)));
    if (n_hidden > 0) {
        std::vector<EmbeddingRecord> records(out.corpus.records());
        for (int cls = 0; cls < 3; ++cls) {
            std::vector<std::size_t> idx(cfg.n_per_class);
            std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(cls) * cfg.n_per_class);
            hide.shuffle(idx);
            for (std::size_t i = 0; i < n_hidden; ++i) records[idx[i]].label.reset();
        }
        out.corpus = Corpus(std::move(records), cfg.d_text, cfg.d_image);
    }
    return out;
}

Corpus generate_synthetic(const SynthConfig& cfg) {
    return generate_synthetic_with_truth(cfg).corpus;
}

}  // namespace fusionlab
