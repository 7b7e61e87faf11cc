#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>

#include "kprune/pruner.hpp"
#include "kprune/random.hpp"

namespace kprune::testing {

/// Draws one randomized score vector from `seed` and checks every pruning
/// contract against it. Returns a description of the first violation.
inline std::optional<std::string> check_pruning_properties(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(199);
    DistanceScores s;
    s.distance.resize(n);
    s.cluster.assign(n, 0);
    // A third of the vectors use a coarse grid so ties are common.
    const bool coarse = rng.below(3) == 0;
    for (auto& d : s.distance) d = coarse ? static_cast<double>(rng.below(5)) : rng.uniform(0.0, 10.0);
    const std::size_t r = rng.below(n);  // removals in [0, n)
    const double f = static_cast<double>(r) / static_cast<double>(n);
    const std::string at = " (seed " + std::to_string(seed) + ", n " + std::to_string(n) + ")";

    const auto simple = prune_simple(s, f);
    const auto hard = prune_hard(s, f);
    for (const auto* kl : {&simple, &hard}) {
        if (kl->size() != n - removed_count(f, n)) return "cardinality" + at;
        try {
            kl->validate();
        } catch (const Error& e) {
            return std::string("validate: ") + e.what() + at;
        }
    }

    auto split = [&](const KeepList& kl) {
        std::vector<bool> kept(n, false);
        for (auto i : kl.indices) kept[i] = true;
        return kept;
    };
    const auto ks = split(simple), kh = split(hard);
    double kept_min = 1e300, removed_max = -1e300;
    double kept_max = -1e300, removed_min = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
        if (ks[i]) kept_min = std::min(kept_min, s.distance[i]);
        else removed_max = std::max(removed_max, s.distance[i]);
        if (kh[i]) kept_max = std::max(kept_max, s.distance[i]);
        else removed_min = std::min(removed_min, s.distance[i]);
    }
    if (r > 0 && kept_min < removed_max) return "simple separation" + at;
    if (r > 0 && kept_max > removed_min) return "hard separation" + at;

    if (!coarse && r > 0 && std::set<double>(s.distance.begin(), s.distance.end()).size() == n) {
        const auto comp = prune_hard(s, 1.0 - f);
        const auto kc = split(comp);
        for (std::size_t i = 0; i < n; ++i)
            if (kc[i] == ks[i]) return "complementarity" + at;
    }

    if (prune_simple(s, f, PruneScope::per_cluster).indices != simple.indices) return "simple per_cluster(k=1)" + at;
    if (prune_hard(s, f, PruneScope::per_cluster).indices != hard.indices) return "hard per_cluster(k=1)" + at;

    if (prune_simple(s, f) != simple || prune_hard(s, f) != hard) return "determinism" + at;
    const std::uint64_t rs = rng.next();
    const auto ra = prune_random(n, f, rs);
    if (ra != prune_random(n, f, rs)) return "random determinism" + at;
    if (ra.size() != n - removed_count(f, n)) return "random cardinality" + at;
    return std::nullopt;
}

}  // namespace kprune::testing
