#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kprune/core.hpp"

namespace kprune {

/// Multinomial linear classifier: logits = W x + b.
struct ProbeModel {
    Matrix weights;             // c x D
    std::vector<double> bias;   // c

    std::size_t n_classes() const noexcept { return weights.rows; }
    std::size_t n_dims() const noexcept { return weights.cols; }
};

struct ProbeConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 0.1;
    double l2_penalty = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Regularized objective mean(CE) + l2/2 * ||W||^2 and its gradient.
struct ProbeObjective {
    double loss = 0.0;
    Matrix grad_weights;
    std::vector<double> grad_bias;
};

ProbeObjective probe_objective(const ProbeModel& model, const EmbeddingMatrix& x, const LabelVector& y,
                               double l2_penalty);

/// Mini-batch gradient descent with a constant step. Weights start
/// uniform(-0.01, 0.01) from the seeded generator, bias at zero; each epoch
/// visits a fresh permutation. Returns the final-epoch model.
ProbeModel train_probe(const EmbeddingMatrix& x, const LabelVector& y, const ProbeConfig& cfg,
                       std::vector<double>* epoch_losses = nullptr);

/// Row-stochastic softmax probabilities, max-subtracted for stability.
Matrix predict_probs(const ProbeModel& model, const EmbeddingMatrix& x);

struct CurveRow {
    std::size_t n = 0;
    double mean_loss = 0.0;
    double std_loss = 0.0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::size_t repeats = 0;

    bool operator==(const CurveRow&) const = default;
};

struct LearningCurve {
    std::vector<CurveRow> rows;

    void validate() const;
    bool operator==(const LearningCurve&) const = default;
};

/// For grid point i and repeat j: subsample `kl` to N with seed
/// derive_seed(cfg.seed, i, j), train a probe seeded with mix64 of that seed,
/// and score it on the fixed test set. Reports means and population stds.
/// Cells may run on `threads` workers; results are assembled by (i, j).
LearningCurve learning_curve(const EmbeddingMatrix& x, const LabelVector& y, const KeepList& kl,
                             const EmbeddingMatrix& test_x, const LabelVector& test_y,
                             const std::vector<std::size_t>& n_grid, std::size_t repeats, const ProbeConfig& cfg,
                             unsigned threads = 1);

/// Header: N,mean_loss,std_loss,mean_acc,std_acc,repeats
void write_learning_curve(const LearningCurve& curve, const std::filesystem::path& path);
LearningCurve read_learning_curve(const std::filesystem::path& path);

}  // namespace kprune
