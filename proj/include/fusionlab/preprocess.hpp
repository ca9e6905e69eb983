#pragma once

#include <cstdint>
#include <vector>

#include "fusionlab/corpus.hpp"
#include "fusionlab/matrix.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

// Per-column z-scoring with population statistics.  Zero-variance columns
// are recorded and passed through unchanged on apply.
struct Standardizer {
    FeatureSelect which = FeatureSelect::Both;
    std::vector<double> text_means, text_stds;
    std::vector<double> image_means, image_stds;
};

Standardizer standardize_fit(const Corpus& c, FeatureSelect which);
Corpus standardize_apply(const Standardizer& s, const Corpus& c);

// Principal components of the selected modality's population covariance.
// Rows of `components` are orthonormal; the sign convention makes the first
// nonzero entry of each row positive so fits are reproducible.
struct PcaModel {
    FeatureSelect which = FeatureSelect::Text;  // Text or Image
    Matrix components;                          // k x d
    std::vector<double> explained_variance;     // nonincreasing, >= 0
    std::vector<double> mean;                   // length d
};

PcaModel pca_fit(const Corpus& c, FeatureSelect which, std::size_t k);
Corpus pca_transform(const PcaModel& p, const Corpus& c);

// Symmetric eigendecomposition by cyclic Jacobi rotations.  Returns
// eigenvalues in descending order with matching eigenvectors as rows.
void jacobi_eigh(const Matrix& sym, std::vector<double>& eigenvalues, Matrix& eigenvectors_rows);

// x + eps, eps ~ N(0, sigma^2) i.i.d. on the selected modality.
Corpus perturb_gaussian(const Corpus& c, FeatureSelect which, double sigma, SeededRng& rng);

// Complementary-modalities synthetic corpus: text separates class 1 from
// {2,3}; image separates class 2 from 3 and is uninformative for class 1.
struct SynthConfig {
    std::size_t n_per_class = 200;
    std::size_t d_text = 16;
    std::size_t d_image = 16;
    double separation = 4.0;      // mean offset a along the first coordinate
    double noise_sigma = 1.0;
    double labeled_fraction = 1.0;
    std::uint64_t seed = 0;
};

struct SyntheticCorpus {
    Corpus corpus;                 // labels hidden per labeled_fraction
    std::vector<int> true_labels;  // ground truth aligned with corpus records
};

SyntheticCorpus generate_synthetic_with_truth(const SynthConfig& cfg);
Corpus generate_synthetic(const SynthConfig& cfg);

}  // namespace fusionlab
