#include "kprune/synth.hpp"

#include <cmath>
#include <string>

#include "kprune/random.hpp"

namespace kprune {

void SynthSpec::validate() const {
    if (n_classes < 2) throw ContractError("synth needs at least two classes");
    if (n_dims < 1) throw ContractError("synth needs at least one dimension");
    if (per_class < 1) throw ContractError("synth needs at least one sample per class");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ContractError("synth radius must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ContractError("synth sigma must be non-negative");
}

namespace {

std::pair<EmbeddingMatrix, LabelVector> draw(const Matrix& means, std::size_t per_class, double sigma, Rng& rng,
                                             const std::vector<std::string>& names) {
    const std::size_t c = means.rows, d = means.cols;
    std::vector<float> values;
    values.reserve(c * per_class * d);
    std::vector<std::uint32_t> ids;
    ids.reserve(c * per_class);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t s = 0; s < per_class; ++s) {
            for (std::size_t j = 0; j < d; ++j) values.push_back(static_cast<float>(means(k, j) + sigma * rng.normal()));
            ids.push_back(static_cast<std::uint32_t>(k));
        }
    return {EmbeddingMatrix(c * per_class, d, std::move(values)),
            LabelVector(std::move(ids), static_cast<std::uint32_t>(c), names)};
}

}  // namespace

SynthData synthesize(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Matrix means(spec.n_classes, spec.n_dims);
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
        auto row = means.row(k);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : row) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : row) v *= spec.radius / norm;
    }
    std::vector<std::string> names;
    for (std::uint32_t k = 0; k < spec.n_classes; ++k) names.push_back("class_" + std::to_string(k));

    auto [x, y] = draw(means, spec.per_class, spec.sigma, rng, names);
    SynthData out{means, std::move(x), std::move(y), std::nullopt, std::nullopt};
    if (spec.test_per_class > 0) {
        auto [tx, ty] = draw(means, spec.test_per_class, spec.sigma, rng, names);
        out.test_x = std::move(tx);
        out.test_y = std::move(ty);
    }
    return out;
}

}  // namespace kprune
