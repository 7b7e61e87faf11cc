#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kprune/core.hpp"

namespace kprune {

struct KMeansConfig {
    std::size_t k = 8;
    std::size_t max_iter = 300;
    double tol = 1e-6;  // relative Frobenius centroid shift
    std::size_t n_init = 10;
    std::uint64_t seed = 0;
    unsigned threads = 1;  // execution only; results do not depend on it

    void validate() const;
};

struct KMeansModel {
    Matrix centroids;                        // k x D
    std::vector<std::uint32_t> assignments;  // N
    std::vector<double> distances;           // N, Euclidean distance to assigned centroid
    double inertia = 0.0;                    // sum of squared distances
    std::size_t iterations_run = 0;
    bool converged = false;
    std::size_t best_init = 0;
    /// Inertia after the seeding assignment and after each Lloyd iteration of
    /// the winning init.
    std::vector<double> inertia_history;
    KMeansConfig config;

    std::size_t k() const noexcept { return centroids.rows; }
};

struct Assignment {
    std::vector<std::uint32_t> clusters;
    std::vector<double> distances;
};

/// Nearest centroid per row (ties to the lowest cluster id) and its
/// Euclidean distance, using ||x||^2 + ||c||^2 - 2 x.c clamped at zero.
Assignment assign(const Matrix& centroids, const EmbeddingMatrix& x, unsigned threads = 1);

/// k-means++ seeding: first centroid uniform, each further one drawn with
/// probability proportional to the squared distance to the nearest chosen
/// centroid. Returns the chosen row indices in draw order.
std::vector<std::size_t> kmeanspp_seed(const EmbeddingMatrix& x, std::size_t k, std::uint64_t seed);

/// Best of n_init k-means++ / Lloyd runs by inertia. Init j is seeded with
/// cfg.seed ^ j.
KMeansModel kmeans_fit(const EmbeddingMatrix& x, const KMeansConfig& cfg);

struct SweepRow {
    std::size_t k;
    double inertia;
};

/// One fit per entry of `ks` (duplicates kept), each with cfg.seed.
std::vector<SweepRow> sweep_k(const EmbeddingMatrix& x, const std::vector<std::size_t>& ks, KMeansConfig cfg);

/// Writes <prefix>.centroids.emb, <prefix>.assignments.lbl and <prefix>.json.
void save_kmeans(const KMeansModel& model, const std::filesystem::path& prefix);

}  // namespace kprune
