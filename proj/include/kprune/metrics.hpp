#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "kprune/core.hpp"

namespace kprune {

struct ClassHistogram {
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    static ClassHistogram from_counts(std::vector<std::size_t> counts);
};

enum class LogBase { natural, two };

/// Normalized Shannon entropy of the class distribution, -sum p log p / log c,
/// with 0 log 0 = 0. Equal to 1 exactly for uniform counts.
double balance(const ClassHistogram& hist, LogBase base = LogBase::natural);

/// Counts over kept samples (all samples when `kl` is empty). Length is
/// always labels.n_classes().
ClassHistogram histogram(const LabelVector& labels, const std::optional<KeepList>& kl = std::nullopt);

/// Mean negative log-probability of the true class. Rows must sum to 1
/// within 1e-6; probabilities are clamped to >= 1e-12 before the log.
double cross_entropy(const Matrix& probs, const LabelVector& labels);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& probs, const LabelVector& labels);

}  // namespace kprune
