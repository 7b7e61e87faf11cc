#include "kprune/random.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace kprune {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t i, std::uint32_t j) noexcept {
    return seed ^ mix64((std::uint64_t{i} << 32) | j);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
    // Reject the top partial bucket so every residue is equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u, v, s;
    do {
        u = uniform(-1.0, 1.0);
        v = uniform(-1.0, 1.0);
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * f;
    has_spare_ = true;
    return u * f;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t count) {
    if (count > n) throw std::invalid_argument("sample_without_replacement: count exceeds population");
    // Partial Fisher-Yates over a virtual identity array; only displaced
    // slots are materialized.
    std::unordered_map<std::size_t, std::size_t> displaced;
    auto at = [&](std::size_t i) {
        auto it = displaced.find(i);
        return it == displaced.end() ? i : it->second;
    };
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + below(n - i);
        const std::size_t vi = at(i), vj = at(j);
        out.push_back(vj);
        displaced[j] = vi;
    }
    return out;
}

}  // namespace kprune
