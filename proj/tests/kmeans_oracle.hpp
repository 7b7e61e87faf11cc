#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "kprune/core.hpp"
#include "kprune/random.hpp"

namespace kprune::testing {

/// Minimum within-cluster sum of squares over every split of the rows into
/// two nonempty groups. Exponential in N; meant for N <= 16.
inline double best_two_partition_inertia(const EmbeddingMatrix& x) {
    const std::size_t n = x.n_samples(), d = x.n_dims();
    double best = std::numeric_limits<double>::infinity();
    // Fixing row 0 in group A enumerates each partition once.
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (n - 1)); ++mask) {
        const std::uint64_t full = mask << 1;  // bit i set: row i in group B
        if (full == 0) continue;
        double cost = 0.0;
        for (int g = 0; g < 2; ++g) {
            std::vector<double> mean(d, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (((full >> i) & 1U) != static_cast<std::uint64_t>(g)) continue;
                ++count;
                for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
            }
            for (auto& m : mean) m /= static_cast<double>(count);
            for (std::size_t i = 0; i < n; ++i) {
                if (((full >> i) & 1U) != static_cast<std::uint64_t>(g)) continue;
                for (std::size_t j = 0; j < d; ++j) cost += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
            }
        }
        best = std::min(best, cost);
    }
    return best;
}

/// Oracle instance: 3..10 points in 2-D drawn from two unit-variance blobs
/// centred at (-2, 0) and (2, 0), each point picking a blob at random.
inline EmbeddingMatrix two_blob_instance(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 3 + rng.below(8);
    std::vector<float> v(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = rng.below(2) ? 2.0 : -2.0;
        v[i * 2] = static_cast<float>(cx + rng.normal());
        v[i * 2 + 1] = static_cast<float>(rng.normal());
    }
    return {n, 2, std::move(v)};
}

}  // namespace kprune::testing
