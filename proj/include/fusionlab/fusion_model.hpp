#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fusionlab/corpus.hpp"
#include "fusionlab/matrix.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

// Architecture of the cross-modal fusion classifier.  Production defaults:
// d=1024, 4 layers, 16 heads, feed-forward expansion 4x, dropout 0.2.
// kDeskPreset keeps the same code path tractable for finite-difference work.
struct ArchConfig {
    std::size_t d = 1024;
    std::size_t layers = 4;
    std::size_t heads = 16;
    std::size_t ff_mult = 4;
    double dropout = 0.2;
    std::size_t d_text = 768;
    std::size_t d_image = 64;

    static constexpr std::size_t kClasses = 3;

    std::size_t head_dim() const { return d / heads; }
    std::size_t ff_dim() const { return ff_mult * d; }
    std::size_t head_h1() const { return d; }
    std::size_t head_h2() const { return d / 4; }

    void validate() const;  // throws ConfigError
};

// Desk-scale preset: same code path, cheap gradient checks.
ArchConfig desk_preset(std::size_t d_text = 16, std::size_t d_image = 8);

// Linear -> batch-norm -> GELU -> dropout, one per modality.
struct ProjectionLayer {
    Matrix w;   // d_in x d
    Matrix b;   // 1 x d
    Matrix bn_gamma, bn_beta;                 // 1 x d
    Matrix bn_running_mean, bn_running_var;   // 1 x d, state not parameters
};

// Post-norm encoder layer: self-attention sublayer then feed-forward
// sublayer, each closed by residual + layer norm.  Attention projections
// carry no biases; heads are column blocks of width d/h.
struct EncoderLayer {
    Matrix wq, wk, wv, wo;          // d x d
    Matrix ff_w1;                   // d x ff_dim
    Matrix ff_b1;                   // 1 x ff_dim
    Matrix ff_w2;                   // ff_dim x d
    Matrix ff_b2;                   // 1 x d
    Matrix ln1_gamma, ln1_beta;     // 1 x d
    Matrix ln2_gamma, ln2_beta;     // 1 x d
};

// 2d -> d -> d/4 -> 3 with GELU + batch-norm + dropout on the hidden layers.
struct ClassifierHead {
    Matrix w1, b1;
    Matrix bn1_gamma, bn1_beta, bn1_running_mean, bn1_running_var;
    Matrix w2, b2;
    Matrix bn2_gamma, bn2_beta, bn2_running_mean, bn2_running_var;
    Matrix w3, b3;
};

enum class RunMode { Train, Eval };

struct FusionModel {
    ArchConfig cfg;
    ProjectionLayer text_proj, image_proj;
    std::vector<EncoderLayer> layers;
    ClassifierHead head;
    RunMode mode = RunMode::Eval;

    // Trainable tensors in the fixed declared order shared by the optimizer,
    // gradient checking, and the model file format.
    std::vector<std::pair<std::string, Matrix*>> param_refs();
    std::vector<std::pair<std::string, const Matrix*>> param_refs() const;
    // Batch-norm running statistics (serialized, not optimized).
    std::vector<std::pair<std::string, Matrix*>> state_refs();
    std::vector<std::pair<std::string, const Matrix*>> state_refs() const;

    std::size_t param_count() const;
};

// Gradients aligned with FusionModel::param_refs order.
struct GradientSet {
    std::vector<Matrix> tensors;

    GradientSet() = default;
    explicit GradientSet(const FusionModel& m);
    void add_scaled(const GradientSet& other, double scale);
};

// --- forward/backward caches -----------------------------------------------

struct BnCache {
    Matrix xhat;                    // normalized pre-affine activations
    std::vector<double> mean, var;  // statistics used by this pass
    bool batch_stats = false;
};

struct DropoutCache {
    Matrix mask;         // includes the 1/(1-p) inverted scaling
    bool active = false;
};

struct LnCache {
    Matrix xhat;
    std::vector<double> inv_std;
};

struct ProjCache {
    Matrix lin;       // pre-BN linear output
    BnCache bn;
    Matrix bn_out;    // input to GELU
    DropoutCache drop;
    Matrix tokens;    // B x d
};

struct LayerCache {
    Matrix x_in;                 // 2 x d
    Matrix q, k, v;              // 2 x d
    std::vector<Matrix> attn;    // h row-stochastic 2x2 matrices
    Matrix context;              // 2 x d, heads concatenated
    DropoutCache attn_drop;
    Matrix residual1;            // pre-LN1
    LnCache ln1;
    Matrix ln1_out;
    Matrix ff_pre;               // 2 x ff_dim
    DropoutCache ff_drop;
    Matrix residual2;            // pre-LN2
    LnCache ln2;
    Matrix out;                  // 2 x d
};

struct HeadCache {
    Matrix fused;   // B x 2d
    Matrix lin1;
    Matrix act1;
    BnCache bn1;
    DropoutCache drop1;
    Matrix h1;
    Matrix lin2;
    Matrix act2;
    BnCache bn2;
    DropoutCache drop2;
    Matrix h2;
};

struct ForwardCache {
    std::size_t batch = 0;
    RunMode mode = RunMode::Eval;
    Matrix input_text, input_image;
    ProjCache text_proj, image_proj;
    std::vector<std::vector<LayerCache>> samples;  // [batch][layer]
    HeadCache head;
    Matrix logits, probs;
};

struct ForwardOutput {
    Matrix probs;   // B x 3
    Matrix logits;  // B x 3
    ForwardCache cache;
};

// Full pass over a batch.  Train mode uses batch BN statistics (B >= 2
// required) and live dropout; eval mode uses running statistics, disables
// dropout, and never touches the rng.
ForwardOutput forward(FusionModel& m, const Matrix& batch_text, const Matrix& batch_image,
                      SeededRng& rng);

// Exact gradients of the mean cross-entropy at the cached batch.  Softmax
// and CE are fused: dlogits = (probs - onehot) / B.
GradientSet backward(const FusionModel& m, const ForwardCache& cache, const std::vector<int>& labels);

struct PredictOutput {
    std::vector<int> labels;  // argmax, ties toward the lowest class
    Matrix probs;
};

// Eval-mode prediction over a corpus with both modalities present.
PredictOutput predict(const FusionModel& m, const Corpus& corpus);

// Xavier weights, zero biases, BN gamma=1/beta=0, running mean 0 / var 1.
FusionModel init_model(const ArchConfig& cfg, SeededRng& rng);

// Documented little-endian container: magic, version, ArchConfig, then all
// parameter and state tensors in declared order as 64-bit floats.
void save_model(const FusionModel& m, const std::string& path);
FusionModel load_model(const std::string& path);

// --- gradient checking -------------------------------------------------------

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t entries = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double worst_rel_err = 0.0;
    bool passed(double tol) const { return worst_rel_err < tol; }
};

// Central-difference audit of every parameter group at a random batch.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-6).
// BN runs on frozen running statistics and dropout is off, so the loss is a
// smooth deterministic function of the parameters.  `tamper` biases one
// gradient entry (test hook for the failure path).
GradCheckReport gradient_check(const ArchConfig& cfg, std::size_t batch, std::uint64_t seed,
                               double h = 1e-5, bool tamper = false);

}  // namespace fusionlab
