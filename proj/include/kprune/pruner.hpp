#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kprune/core.hpp"

namespace kprune {

/// Per-sample distance to the assigned centroid plus the cluster id.
struct DistanceScores {
    std::vector<double> distance;
    std::vector<std::uint32_t> cluster;
    std::string digest;  // provenance of the file the scores came from, if any

    std::size_t size() const noexcept { return distance.size(); }
    void validate() const;
};

/// Drops the samples closest to their centroid. Ties: lower index removed first.
KeepList prune_simple(const DistanceScores& scores, double fraction, PruneScope scope = PruneScope::global);

/// Drops the samples farthest from their centroid. Ties: higher index removed first.
KeepList prune_hard(const DistanceScores& scores, double fraction, PruneScope scope = PruneScope::global);

/// Uniform random removal of round(fraction * n) samples.
KeepList prune_random(std::size_t n, double fraction, std::uint64_t seed, std::string parent_digest = {});

/// Uniform subset of `kl` of size `target_n`. Keeps the parent's source_n,
/// fraction, scope and digest; records method=subsample and the new seed.
KeepList subsample(const KeepList& kl, std::size_t target_n, std::uint64_t seed);

}  // namespace kprune
