#pragma once

#include <algorithm>
#include <cmath>

#include "kprune/probe.hpp"
#include "kprune/random.hpp"

namespace kprune::testing {

struct GradCheck {
    double max_relative = 0.0;  // per parameter, denominator floored at 1e-4
    double norm_relative = 0.0; // ||analytic - numeric|| / ||numeric||
};

/// Compares probe_objective's gradient with central differences of its loss.
inline GradCheck probe_gradient_check(std::size_t n, std::size_t d, std::uint32_t c, std::uint64_t seed,
                                      double l2 = 1e-2, double step = 1e-5) {
    Rng rng(seed);
    std::vector<float> xv(n * d);
    for (auto& v : xv) v = static_cast<float>(rng.normal());
    std::vector<std::uint32_t> yv(n);
    for (std::size_t i = 0; i < n; ++i) yv[i] = static_cast<std::uint32_t>(i % c);
    const EmbeddingMatrix x(n, d, xv);
    const LabelVector y(yv, c);
    ProbeModel m{Matrix(c, d), std::vector<double>(c)};
    for (double& w : m.weights.data) w = 0.5 * rng.normal();
    for (double& b : m.bias) b = 0.5 * rng.normal();

    const auto analytic = probe_objective(m, x, y, l2);
    std::vector<double> a, num;
    auto probe = [&](double& param, double grad) {
        const double keep = param;
        param = keep + step;
        const double up = probe_objective(m, x, y, l2).loss;
        param = keep - step;
        const double down = probe_objective(m, x, y, l2).loss;
        param = keep;
        a.push_back(grad);
        num.push_back((up - down) / (2.0 * step));
    };
    for (std::size_t e = 0; e < m.weights.data.size(); ++e) probe(m.weights.data[e], analytic.grad_weights.data[e]);
    for (std::size_t k = 0; k < c; ++k) probe(m.bias[k], analytic.grad_bias[k]);

    GradCheck out;
    double diff = 0.0, ref = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const double err = std::abs(a[t] - num[t]);
        out.max_relative = std::max(out.max_relative, err / std::max({std::abs(a[t]), std::abs(num[t]), 1e-4}));
        diff += err * err;
        ref += num[t] * num[t];
    }
    out.norm_relative = std::sqrt(diff / ref);
    return out;
}

}  // namespace kprune::testing
