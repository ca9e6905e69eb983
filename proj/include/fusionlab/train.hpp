#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusionlab/corpus.hpp"
#include "fusionlab/fusion_model.hpp"
#include "fusionlab/matrix.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

enum class OptimizerKind { Adam, Adagrad };

// Training configuration.  Adam defaults follow the production recipe
// (lr 3e-4, 50 epochs, early stopping patience 10); Adagrad (lr 0.01,
// 20 epochs) is selectable.
struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr = 3e-4;
    double weight_decay = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    double step_gamma = 0.1;
    std::size_t step_every = 5;
    double lambda = 1.0;       // pseudo-label loss weight
    bool oversample = false;
    double aug_sigma = 0.0;    // Gaussian input jitter
    double aug_mask_p = 0.0;   // Bernoulli feature masking
    std::uint64_t seed = 0;

    static TrainConfig adagrad_defaults();
    void validate() const;
};

// Per-parameter accumulators; layout mirrors FusionModel::param_refs order.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    std::vector<Matrix> m, v;       // adam first/second moments
    std::uint64_t timestep = 0;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::vector<Matrix> sumsq;      // adagrad accumulator
    double adagrad_eps = 1e-10;
};

OptimizerState make_optimizer_state(OptimizerKind kind, const FusionModel& model);

// Standard update rules; the L2 term enters as grad += weight_decay * param.
void adam_step(std::vector<Matrix*>& params, const GradientSet& grads, OptimizerState& state,
               double lr, double weight_decay);
void adagrad_step(std::vector<Matrix*>& params, const GradientSet& grads, OptimizerState& state,
                  double lr, double weight_decay);

// lr0 * gamma^floor(epoch / every).
double step_decay(double lr0, std::size_t epoch, double gamma, std::size_t every);

// Mean cross-entropy over logits, via log-sum-exp.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// CE(labeled) + lambda * CE(pseudo); an empty part contributes 0, both empty
// is a contract violation.
double combined_loss(const Matrix& labeled_logits, const std::vector<int>& labeled_y,
                     const Matrix& pseudo_logits, const std::vector<int>& pseudo_y, double lambda);

// Upsamples minority classes with replacement until all class counts equal
// the majority count.  Added records keep the source values under a fresh
// "<id>#dupN" id; every original record is retained.
Corpus oversample(const Corpus& labeled, SeededRng& rng);

// Gaussian jitter plus inverted-scaling Bernoulli feature masking on both
// modality batches.
std::pair<Matrix, Matrix> augment(const Matrix& batch_text, const Matrix& batch_image,
                                  double aug_sigma, double dropout_p, SeededRng& rng);

struct FitReport {
    std::vector<double> train_loss;   // per epoch
    std::vector<double> val_loss;
    std::vector<double> val_accuracy;
    std::size_t best_epoch = 0;       // epoch whose parameters were restored
    std::size_t stopped_epoch = 0;    // last epoch that ran
    double best_val_loss = 0.0;
};

// Trains the fusion model on the labeled corpus (plus an optional
// pseudo-labeled corpus weighted by lambda), holding out a stratified 10%
// validation split for early stopping, and restores the best-epoch
// parameters before returning.
FitReport fit(FusionModel& model, const Corpus& labeled, const Corpus* pseudo,
              const TrainConfig& cfg, SeededRng& rng);

}  // namespace fusionlab
