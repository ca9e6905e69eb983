#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fusionlab/corpus.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/preprocess.hpp"

using namespace fusionlab;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << contents;
}

Corpus make_corpus(std::size_t n, std::size_t d_text, std::size_t d_image, SeededRng& rng,
                   double labeled_share = 1.0) {
    Corpus c({}, d_text, d_image);
    for (std::size_t i = 0; i < n; ++i) {
        EmbeddingRecord rec;
        rec.id = "r" + std::to_string(i);
        if (rng.next_double() < labeled_share) rec.label = 1 + static_cast<int>(rng.next_below(3));
        rec.text_vec.resize(d_text);
        for (auto& v : rec.text_vec) v = rng.uniform(-2, 2);
        if (d_image > 0) {
            std::vector<double> img(d_image);
            for (auto& v : img) v = rng.uniform(-2, 2);
            rec.image_vec = std::move(img);
        }
        c.append(std::move(rec));
    }
    return c;
}

}  // namespace

TEST_CASE("load_corpus parses a minimal file") {
    auto path = temp_path("fusionlab_min.csv");
    write_file(path, "id,label,t0,t1,i0\na,1,0.5,-1.0,2.0\n");
    Corpus c = load_corpus(path);
    CHECK(c.size() == 1);
    CHECK(c.d_text() == 2);
    CHECK(c.d_image() == 1);
    CHECK(c.at(0).label == 1);
    CHECK(c.at(0).text_vec == std::vector<double>{0.5, -1.0});
    CHECK(c.at(0).image_vec == std::vector<double>{2.0});
}

TEST_CASE("load_corpus empty label means unlabeled, empty image cells mean absent") {
    auto path = temp_path("fusionlab_unlab.csv");
    write_file(path, "id,label,t0,i0,i1\nu,,1.0,,\nv,3,2.0,0.5,0.25\n");
    Corpus c = load_corpus(path);
    CHECK(c.size() == 2);
    CHECK_FALSE(c.at(0).label.has_value());
    CHECK_FALSE(c.at(0).image_vec.has_value());
    CHECK(c.at(1).label == 3);
    CHECK(c.at(1).image_vec.has_value());
}

TEST_CASE("load_corpus format errors carry line numbers") {
    auto path = temp_path("fusionlab_bad.csv");

    write_file(path, "id,label,t0,t1\na,1,0.5\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"), FormatError);

    write_file(path, "id,label,t0\na,1,0.5\na,2,1.5\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("duplicate"), FormatError);

    write_file(path, "id,label,t0\na,7,0.5\n");
    CHECK_THROWS_AS(load_corpus(path), FormatError);

    write_file(path, "id,label,t0\na,1,zebra\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("malformed"), FormatError);

    write_file(path, "id,label,t0,i0,i1\na,1,0.5,1.0,\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("partially"), FormatError);
}

TEST_CASE("save/load round-trip is the identity") {
    SeededRng rng(100);
    Corpus c = make_corpus(25, 4, 3, rng, 0.6);
    auto path = temp_path("fusionlab_rt.csv");
    save_corpus(c, path);
    Corpus back = load_corpus(path);
    REQUIRE(back.size() == c.size());
    CHECK(back.d_text() == c.d_text());
    CHECK(back.d_image() == c.d_image());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back.at(i).id == c.at(i).id);
        CHECK(back.at(i).label == c.at(i).label);
        for (std::size_t j = 0; j < c.d_text(); ++j) {
            CHECK(back.at(i).text_vec[j] == c.at(i).text_vec[j]);
        }
        CHECK(back.at(i).image_vec.has_value() == c.at(i).image_vec.has_value());
    }
}

TEST_CASE("save_corpus writes header-only file for an empty corpus") {
    Corpus empty({}, 2, 1);
    auto path = temp_path("fusionlab_empty.csv");
    save_corpus(empty, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "id,label,t0,t1,i0");
    CHECK_FALSE(std::getline(f, line));
}

TEST_CASE("standardize_fit two-point and degenerate columns") {
    Corpus c({}, 1, 0);
    c.append({"a", 1, {1.0}, std::nullopt});
    c.append({"b", 2, {3.0}, std::nullopt});
    Standardizer s = standardize_fit(c, FeatureSelect::Text);
    CHECK(s.text_means[0] == doctest::Approx(2.0));
    CHECK(s.text_stds[0] == doctest::Approx(1.0));  // population std

    Corpus constant({}, 1, 0);
    constant.append({"a", 1, {5.0}, std::nullopt});
    constant.append({"b", 2, {5.0}, std::nullopt});
    Standardizer sc = standardize_fit(constant, FeatureSelect::Text);
    CHECK(sc.text_stds[0] == 0.0);
    Corpus applied = standardize_apply(sc, constant);
    CHECK(applied.at(0).text_vec[0] == 5.0);  // zero-variance pass-through

    Corpus one({}, 1, 0);
    one.append({"a", 1, {1.0}, std::nullopt});
    CHECK_THROWS_AS(standardize_fit(one, FeatureSelect::Text), DataError);
}

TEST_CASE("standardize apply-then-refit gives mean 0 and std 1") {
    SeededRng rng(7);
    Corpus c = make_corpus(50, 8, 4, rng);
    Standardizer s = standardize_fit(c, FeatureSelect::Both);
    Corpus z = standardize_apply(s, c);
    Standardizer s2 = standardize_fit(z, FeatureSelect::Both);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(s2.text_means[j]) < 1e-9);
        CHECK(std::abs(s2.text_stds[j] - 1.0) < 1e-9);
    }
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(s2.image_means[j]) < 1e-9);
        CHECK(std::abs(s2.image_stds[j] - 1.0) < 1e-9);
    }
}

TEST_CASE("pca on collinear points finds the diagonal direction") {
    Corpus c({}, 2, 0);
    for (int i = 0; i < 10; ++i) {
        double x = i * 0.5 - 2.0;
        c.append({"p" + std::to_string(i), 1, {x, x}, std::nullopt});
    }
    PcaModel m = pca_fit(c, FeatureSelect::Text, 2);
    double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(m.components(0, 0) - inv_sqrt2) < 1e-8);
    CHECK(std::abs(m.components(0, 1) - inv_sqrt2) < 1e-8);
    CHECK(m.explained_variance[1] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("pca full-rank reconstruction is exact") {
    SeededRng rng(21);
    Corpus c = make_corpus(30, 5, 0, rng);
    PcaModel m = pca_fit(c, FeatureSelect::Text, 5);
    Corpus proj = pca_transform(m, c);
    for (std::size_t i = 0; i < c.size(); ++i) {
        // x_hat = mean + z * C
        for (std::size_t j = 0; j < 5; ++j) {
            double xhat = m.mean[j];
            for (std::size_t r = 0; r < 5; ++r) xhat += proj.at(i).text_vec[r] * m.components(r, j);
            CHECK(std::abs(xhat - c.at(i).text_vec[j]) < 1e-8);
        }
    }
}

TEST_CASE("pca matches an independent eigendecomposition oracle") {
    SeededRng rng(33);
    Corpus c = make_corpus(40, 6, 0, rng);
    PcaModel m = pca_fit(c, FeatureSelect::Text, 3);

    // Oracle: Eigen's self-adjoint solver over the same population covariance.
    Eigen::MatrixXd x(40, 6);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 6; ++j) x(static_cast<long>(i), static_cast<long>(j)) = c.at(i).text_vec[j];
    Eigen::RowVectorXd mean = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / 40.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::VectorXd evals = solver.eigenvalues().reverse();

    double total_variance = cov.trace();
    for (int r = 0; r < 3; ++r) {
        CHECK(std::abs(m.explained_variance[static_cast<std::size_t>(r)] - evals(r)) < 1e-8);
    }

    // Orthonormal rows, nonincreasing variance, full-k variance sum.
    PcaModel full = pca_fit(c, FeatureSelect::Text, 6);
    double sum = 0.0;
    for (std::size_t r = 0; r < 6; ++r) {
        sum += full.explained_variance[r];
        if (r + 1 < 6) CHECK(full.explained_variance[r] >= full.explained_variance[r + 1]);
        for (std::size_t q = 0; q < 6; ++q) {
            double dot = 0.0;
            for (std::size_t j = 0; j < 6; ++j) dot += full.components(r, j) * full.components(q, j);
            CHECK(std::abs(dot - (r == q ? 1.0 : 0.0)) < 1e-8);
        }
    }
    CHECK(std::abs(sum - total_variance) < 1e-8);

    CHECK_THROWS_AS(pca_fit(c, FeatureSelect::Text, 7), ConfigError);
}

TEST_CASE("perturb_gaussian identity, determinism, and moments") {
    SeededRng rng(3);
    Corpus c = make_corpus(100, 100, 0, rng);

    SeededRng z(9);
    Corpus same = perturb_gaussian(c, FeatureSelect::Text, 0.0, z);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(same.at(i).text_vec == c.at(i).text_vec);

    SeededRng r1(5), r2(5);
    Corpus p1 = perturb_gaussian(c, FeatureSelect::Text, 0.3, r1);
    Corpus p2 = perturb_gaussian(c, FeatureSelect::Text, 0.3, r2);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(p1.at(i).text_vec == p2.at(i).text_vec);

    // 10k entries: std of (out - in) within 10% of sigma.
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = 0; j < c.d_text(); ++j) {
            double d = p1.at(i).text_vec[j] - c.at(i).text_vec[j];
            sum += d;
            sumsq += d * d;
            ++n;
        }
    }
    double mean = sum / static_cast<double>(n);
    double sd = std::sqrt(sumsq / static_cast<double>(n) - mean * mean);
    CHECK(sd == doctest::Approx(0.3).epsilon(0.10));
}

TEST_CASE("split_labeled partitions the corpus") {
    SeededRng rng(17);
    Corpus c = make_corpus(40, 3, 2, rng, 0.5);
    auto [labeled, unlabeled] = split_labeled(c);
    CHECK(labeled.size() + unlabeled.size() == c.size());
    CHECK(labeled.all_labeled());
    CHECK(unlabeled.labeled_count() == 0);
    for (const auto& r : labeled.records()) CHECK_FALSE(unlabeled.contains_id(r.id));

    Corpus all_labeled = make_corpus(5, 3, 2, rng, 1.0);
    auto [l2, u2] = split_labeled(all_labeled);
    CHECK(l2.size() == 5);
    CHECK(u2.empty());
}

TEST_CASE("generate_synthetic is reproducible, balanced, and hides labels per class") {
    SynthConfig cfg;
    cfg.n_per_class = 50;
    cfg.d_text = 4;
    cfg.d_image = 3;
    cfg.labeled_fraction = 0.2;
    cfg.seed = 99;

    Corpus a = generate_synthetic(cfg);
    Corpus b = generate_synthetic(cfg);
    REQUIRE(a.size() == 150);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.at(i).id == b.at(i).id);
        CHECK(a.at(i).label == b.at(i).label);
        CHECK(a.at(i).text_vec == b.at(i).text_vec);
        CHECK(*a.at(i).image_vec == *b.at(i).image_vec);
    }

    auto counts = a.class_counts();
    CHECK(counts[0] == 10);  // 20% of 50 per class
    CHECK(counts[1] == 10);
    CHECK(counts[2] == 10);

    auto truth = generate_synthetic_with_truth(cfg);
    REQUIRE(truth.true_labels.size() == 150);
    for (std::size_t i = 0; i < truth.corpus.size(); ++i) {
        if (truth.corpus.at(i).label) CHECK(*truth.corpus.at(i).label == truth.true_labels[i]);
    }

    SynthConfig bad = cfg;
    bad.separation = 0.0;
    CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

namespace {

// Independent Bayes-rule oracle for the synthetic generative process.  Log
// densities dropped of shared constants; class 1's image likelihood is the
// two-cluster mixture.
int bayes_predict(const std::vector<double>& text, const std::vector<double>& image, double a,
                  double sigma, bool use_text, bool use_image) {
    auto gauss_shift = [&](const std::vector<double>& v, double shift) {
        double s = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            double mu = (j == 0) ? shift : 0.0;
            s -= (v[j] - mu) * (v[j] - mu);
        }
        return s / (2.0 * sigma * sigma);
    };
    double log_like[3] = {0.0, 0.0, 0.0};
    if (use_text) {
        log_like[0] += gauss_shift(text, +a);
        log_like[1] += gauss_shift(text, -a);
        log_like[2] += gauss_shift(text, -a);
    }
    if (use_image) {
        double lp = gauss_shift(image, +a);
        double lm = gauss_shift(image, -a);
        double mx = std::max(lp, lm);
        log_like[0] += mx + std::log(0.5 * std::exp(lp - mx) + 0.5 * std::exp(lm - mx));
        log_like[1] += lp;
        log_like[2] += lm;
    }
    int best = 0;
    for (int k = 1; k < 3; ++k) {
        if (log_like[k] > log_like[best]) best = k;
    }
    return best + 1;
}

}  // namespace

TEST_CASE("synthetic corpus Bayes accuracies match the construction") {
    const double a = 4.0, sigma = 1.0;
    const std::size_t d_text = 4, d_image = 3;
    SeededRng rng(2024);

    std::size_t n = 6000;
    std::size_t correct_multi = 0, correct_text = 0, correct_image = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int cls = 1 + static_cast<int>(i % 3);
        std::vector<double> text(d_text), image(d_image);
        double tshift = (cls == 1) ? a : -a;
        for (std::size_t j = 0; j < d_text; ++j) {
            text[j] = (j == 0 ? tshift : 0.0) + rng.normal(0.0, sigma);
        }
        double ishift = (cls == 2) ? a : (cls == 3 ? -a : (rng.next_double() < 0.5 ? a : -a));
        for (std::size_t j = 0; j < d_image; ++j) {
            image[j] = (j == 0 ? ishift : 0.0) + rng.normal(0.0, sigma);
        }
        correct_multi += bayes_predict(text, image, a, sigma, true, true) == cls;
        correct_text += bayes_predict(text, image, a, sigma, true, false) == cls;
        correct_image += bayes_predict(text, image, a, sigma, false, true) == cls;
    }
    double acc_multi = static_cast<double>(correct_multi) / static_cast<double>(n);
    double acc_text = static_cast<double>(correct_text) / static_cast<double>(n);
    double acc_image = static_cast<double>(correct_image) / static_cast<double>(n);

    CHECK(acc_multi >= 0.95);
    CHECK(acc_text == doctest::Approx(2.0 / 3).epsilon(0.05));
    CHECK(acc_image <= 2.0 / 3 + 0.03);
}
