#pragma once

#include <cstdint>

#include "kprune/core.hpp"

namespace kprune {

/// Labeled Gaussian mixture: class means drawn uniformly on the sphere of
/// the given radius, isotropic within-class noise.
struct SynthSpec {
    std::uint32_t n_classes = 10;
    std::size_t n_dims = 64;
    std::size_t per_class = 100;
    std::size_t test_per_class = 0;  // optional held-out set from the same means
    double radius = 1.0;
    double sigma = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthData {
    Matrix means;  // n_classes x n_dims
    EmbeddingMatrix train_x;
    LabelVector train_y;
    std::optional<EmbeddingMatrix> test_x;
    std::optional<LabelVector> test_y;
};

/// Rows are class-major. Draw order: means, then training rows, then test rows.
SynthData synthesize(const SynthSpec& spec);

}  // namespace kprune
