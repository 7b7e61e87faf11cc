#pragma once

#include <filesystem>
#include <vector>

#include "kprune/core.hpp"

namespace kprune {

/// Top-m principal axes of the sample covariance (divisor N-1).
/// Component rows are orthonormal, ordered by descending eigenvalue, and
/// sign-fixed so the largest-magnitude coordinate is positive.
struct PcaModel {
    std::vector<double> mean;          // length D
    Matrix components;                 // m x D
    std::vector<double> eigenvalues;   // length m, nonincreasing, >= 0
    double total_variance = 0.0;       // trace of the covariance
    std::size_t n_samples = 0;         // rows the model was fitted on

    std::size_t n_components() const noexcept { return components.rows; }
    std::size_t n_dims() const noexcept { return mean.size(); }

    std::vector<double> explained_variance_ratio() const;
};

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // row i is the eigenvector for values[i]
    int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps until every
/// off-diagonal entry is below 1e-10 * ||A||_F, or 64 sweeps.
SymmetricEigen jacobi_eigen(Matrix a);

/// Sample covariance (divisor N-1) and column means. Row blocks are reduced in
/// block order, so the result does not depend on `threads`.
Matrix sample_covariance(const EmbeddingMatrix& x, std::vector<double>& mean, unsigned threads = 1);

PcaModel fit_pca(const EmbeddingMatrix& x, std::size_t m, unsigned threads = 1);

/// Row i of the result is components * (x_i - mean).
EmbeddingMatrix transform(const PcaModel& model, const EmbeddingMatrix& x);

/// Smallest m' whose cumulative explained-variance ratio reaches `threshold`.
/// Requires a model fitted with m = min(N-1, D).
std::size_t components_for_variance(const PcaModel& model, double threshold);

/// Writes <prefix>.mean.emb, <prefix>.components.emb and <prefix>.json.
void save_pca(const PcaModel& model, const std::filesystem::path& prefix);
PcaModel load_pca(const std::filesystem::path& prefix);

}  // namespace kprune
