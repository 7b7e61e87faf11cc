#include "kprune/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kprune/random.hpp"

namespace kprune {

void DistanceScores::validate() const {
    if (distance.empty()) throw ContractError("distance scores are empty");
    if (cluster.size() != distance.size())
        throw ContractError("distance and cluster arrays differ in length");
    for (std::size_t i = 0; i < distance.size(); ++i)
        if (!std::isfinite(distance[i]) || distance[i] < 0.0)
            throw ContractError("distance score " + std::to_string(i) + " is negative or non-finite");
}

namespace {

void check_fraction(double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw DomainError("pruning fraction must lie in [0, 1), got " + std::to_string(fraction));
}

enum class Drop { nearest, farthest };

// Removal order within a group of candidate indices (ascending on entry).
void order_for_removal(std::vector<std::size_t>& idx, const std::vector<double>& d, Drop drop) {
    if (drop == Drop::nearest)
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    else
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return d[a] != d[b] ? d[a] > d[b] : a > b;
        });
}

KeepList prune_by_distance(const DistanceScores& scores, double fraction, PruneScope scope, Drop drop) {
    scores.validate();
    check_fraction(fraction);
    const std::size_t n = scores.size();

    std::vector<std::vector<std::size_t>> groups;
    if (scope == PruneScope::global) {
        groups.emplace_back(n);
        std::iota(groups[0].begin(), groups[0].end(), 0);
    } else {
        const auto k = *std::max_element(scores.cluster.begin(), scores.cluster.end()) + std::size_t{1};
        groups.resize(k);
        for (std::size_t i = 0; i < n; ++i) groups[scores.cluster[i]].push_back(i);
    }

    std::vector<bool> removed(n, false);
    for (auto& g : groups) {
        const std::size_t r = removed_count(fraction, g.size());
        order_for_removal(g, scores.distance, drop);
        for (std::size_t t = 0; t < r; ++t) removed[g[t]] = true;
    }

    KeepList kl;
    for (std::size_t i = 0; i < n; ++i)
        if (!removed[i]) kl.indices.push_back(i);
    if (kl.indices.empty()) throw DomainError("pruning would remove every sample");
    kl.source_n = n;
    kl.method = drop == Drop::nearest ? PruneMethod::simple : PruneMethod::hard;
    kl.fraction_removed = fraction;
    kl.scope = scope;
    kl.parent_digest = scores.digest;
    return kl;
}

}  // namespace

KeepList prune_simple(const DistanceScores& scores, double fraction, PruneScope scope) {
    return prune_by_distance(scores, fraction, scope, Drop::nearest);
}

KeepList prune_hard(const DistanceScores& scores, double fraction, PruneScope scope) {
    return prune_by_distance(scores, fraction, scope, Drop::farthest);
}

KeepList prune_random(std::size_t n, double fraction, std::uint64_t seed, std::string parent_digest) {
    check_fraction(fraction);
    if (n == 0) throw ContractError("cannot prune an empty dataset");
    const std::size_t r = removed_count(fraction, n);
    if (r >= n) throw DomainError("pruning would remove every sample");
    Rng rng(seed);
    KeepList kl;
    kl.indices = rng.sample_without_replacement(n, n - r);
    std::sort(kl.indices.begin(), kl.indices.end());
    kl.source_n = n;
    kl.method = PruneMethod::random;
    kl.fraction_removed = fraction;
    kl.seed = seed;
    kl.parent_digest = std::move(parent_digest);
    return kl;
}

KeepList subsample(const KeepList& kl, std::size_t target_n, std::uint64_t seed) {
    if (target_n == 0) throw ContractError("subsample target must be at least 1");
    if (target_n > kl.size())
        throw ContractError("subsample target " + std::to_string(target_n) + " exceeds keep-list size " +
                            std::to_string(kl.size()));
    KeepList out = kl;
    out.method = PruneMethod::subsample;
    out.seed = seed;
    if (target_n == kl.size()) return out;
    Rng rng(seed);
    const auto picks = rng.sample_without_replacement(kl.size(), target_n);
    out.indices.clear();
    out.indices.reserve(target_n);
    for (auto p : picks) out.indices.push_back(kl.indices[p]);
    std::sort(out.indices.begin(), out.indices.end());
    return out;
}

}  // namespace kprune
