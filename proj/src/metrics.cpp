#include "kprune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kprune {

namespace {

constexpr double kProbabilityFloor = 1e-12;
constexpr double kRowSumTolerance = 1e-6;

void check_probs(const Matrix& probs, const LabelVector& labels) {
    if (probs.rows != labels.n_samples())
        throw ContractError("probability matrix has " + std::to_string(probs.rows) + " rows for " +
                            std::to_string(labels.n_samples()) + " labels");
    if (probs.cols != labels.n_classes())
        throw ContractError("probability matrix has " + std::to_string(probs.cols) + " columns for " +
                            std::to_string(labels.n_classes()) + " classes");
    for (std::size_t i = 0; i < probs.rows; ++i) {
        auto r = probs.row(i);
        const double s = std::accumulate(r.begin(), r.end(), 0.0);
        if (std::abs(s - 1.0) > kRowSumTolerance || std::any_of(r.begin(), r.end(), [](double p) { return p < 0.0; }))
            throw ContractError("probability row " + std::to_string(i) + " is not stochastic");
    }
}

}  // namespace

ClassHistogram ClassHistogram::from_counts(std::vector<std::size_t> counts) {
    ClassHistogram h;
    h.total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    h.counts = std::move(counts);
    return h;
}

double balance(const ClassHistogram& hist, LogBase base) {
    const std::size_t c = hist.counts.size();
    if (c < 2) throw DomainError("balance needs at least two classes");
    if (hist.total == 0) throw DomainError("balance of an empty histogram");
    // Uniform counts give exactly 1; avoids a last-ulp miss from the sum.
    if (std::all_of(hist.counts.begin(), hist.counts.end(), [&](std::size_t n) { return n == hist.counts[0]; }))
        return 1.0;
    auto lg = [base](double v) { return base == LogBase::natural ? std::log(v) : std::log2(v); };
    double h = 0.0;
    for (auto n : hist.counts) {
        if (n == 0) continue;
        const double p = static_cast<double>(n) / static_cast<double>(hist.total);
        h -= p * lg(p);
    }
    return std::clamp(h / lg(static_cast<double>(c)), 0.0, 1.0);
}

ClassHistogram histogram(const LabelVector& labels, const std::optional<KeepList>& kl) {
    std::vector<std::size_t> counts(labels.n_classes(), 0);
    if (!kl) {
        for (auto id : labels.ids()) ++counts[id];
    } else {
        if (kl->source_n != labels.n_samples())
            throw ContractError("keep-list indexes " + std::to_string(kl->source_n) + " samples but labels have " +
                                std::to_string(labels.n_samples()));
        for (auto i : kl->indices) {
            if (i >= labels.n_samples()) throw ContractError("keep-list index out of range");
            ++counts[labels[i]];
        }
    }
    return ClassHistogram::from_counts(std::move(counts));
}

double cross_entropy(const Matrix& probs, const LabelVector& labels) {
    check_probs(probs, labels);
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) sum -= std::log(std::max(probs(i, labels[i]), kProbabilityFloor));
    return sum / static_cast<double>(probs.rows);
}

double accuracy(const Matrix& probs, const LabelVector& labels) {
    check_probs(probs, labels);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        auto r = probs.row(i);
        const auto arg = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
        if (arg == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.rows);
}

}  // namespace kprune
