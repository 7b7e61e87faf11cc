#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace kprune {

/// SplitMix64 finalizer. Used to derive independent seeds from (seed, i, j).
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed for cell (i, j) of a repeated experiment: seed ^ mix64((i << 32) | j).
std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t i, std::uint32_t j) noexcept;

/// Portable seeded generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; all conversions to doubles, bounded
/// integers and normals are done here rather than with the std
/// distributions, which are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound), bound > 0. Rejection sampling, unbiased.
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via the Marsaglia polar method.
    double normal();

    /// Fisher-Yates shuffle of the first `v.size()` elements.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    /// `count` distinct values drawn uniformly from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

private:
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace kprune
