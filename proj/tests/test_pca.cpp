#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "doctest.h"
#include "kprune/pca.hpp"
#include "test_util.hpp"

using namespace kprune;
using kprune::testing::gaussian;
using kprune::testing::rows;

namespace {

// Brute-force oracle: dense covariance via Eigen and its self-adjoint solver.
struct EigenOracle {
    Eigen::MatrixXd cov;
    Eigen::VectorXd values;  // descending
};

EigenOracle oracle(const EmbeddingMatrix& x) {
    Eigen::MatrixXd m(x.n_samples(), x.n_dims());
    for (std::size_t i = 0; i < x.n_samples(); ++i)
        for (std::size_t j = 0; j < x.n_dims(); ++j) m(i, j) = x(i, j);
    Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
    EigenOracle o;
    o.cov = centered.transpose() * centered / static_cast<double>(x.n_samples() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(o.cov);
    o.values = solver.eigenvalues().reverse();
    return o;
}

// Rows are A z_i with A of rank 3 (D=32) plus an offset; no noise.
EmbeddingMatrix rank3(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = 32;
    std::vector<double> a(d * 3), offset(d);
    for (auto& v : a) v = rng.normal();
    for (auto& v : offset) v = rng.uniform(-2.0, 2.0);
    std::vector<float> vals(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const double z[3] = {3.0 * rng.normal(), 2.0 * rng.normal(), rng.normal()};
        for (std::size_t j = 0; j < d; ++j)
            vals[i * d + j] = static_cast<float>(offset[j] + a[j * 3] * z[0] + a[j * 3 + 1] * z[1] + a[j * 3 + 2] * z[2]);
    }
    return {n, d, std::move(vals)};
}

// Gaussian rows with per-column scales 1..D so eigenvalues are well separated.
EmbeddingMatrix anisotropic(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] = static_cast<float>((1.0 + 0.5 * j) * rng.normal());
    return {n, d, std::move(v)};
}

double dist(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (double{a[j]} - b[j]) * (double{a[j]} - b[j]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("variance on a single axis") {
    const auto x = rows({{1, 0}, {-1, 0}, {2, 0}, {-2, 0}});
    const auto model = fit_pca(x, 1);
    CHECK(model.components(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(model.components(0, 1)) < 1e-12);
    CHECK(model.explained_variance_ratio()[0] == doctest::Approx(1.0));
    CHECK(model.total_variance == doctest::Approx(10.0 / 3.0));
}

TEST_CASE("model invariants and the trace identity") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto x = gaussian(40, 12, seed);
        const auto model = fit_pca(x, 12);
        const auto ratios = model.explained_variance_ratio();
        CHECK(std::accumulate(ratios.begin(), ratios.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        double cum = 0.0;
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            CHECK(ratios[i] >= 0.0);
            CHECK(ratios[i] <= 1.0);
            if (i > 0) CHECK(model.eigenvalues[i] <= model.eigenvalues[i - 1]);
            cum += ratios[i];
            CHECK(cum <= 1.0 + 1e-9);
        }
        for (std::size_t a = 0; a < 12; ++a)
            for (std::size_t b = 0; b < 12; ++b) {
                double dot = 0.0;
                for (std::size_t j = 0; j < 12; ++j) dot += model.components(a, j) * model.components(b, j);
                CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
            }
        // Sign convention: largest-magnitude coordinate positive.
        for (std::size_t a = 0; a < 12; ++a) {
            auto r = model.components.row(a);
            auto it = std::max_element(r.begin(), r.end(), [](double p, double q) { return std::abs(p) < std::abs(q); });
            CHECK(*it > 0.0);
        }
    }
}

TEST_CASE("fewer samples than dimensions caps the component count at N-1") {
    const auto x = gaussian(5, 10, 4);
    const auto model = fit_pca(x, 4);
    const auto ratios = model.explained_variance_ratio();
    CHECK(std::accumulate(ratios.begin(), ratios.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(fit_pca(x, 5), ContractError);
}

TEST_CASE("eigen-residual against a brute-force dense solve") {
    for (std::size_t d : {8, 33, 64}) {
        const auto x = anisotropic(200, d, 100 + d);
        const auto model = fit_pca(x, d);
        const auto o = oracle(x);
        for (std::size_t r = 0; r < d; ++r) {
            Eigen::VectorXd v(d);
            for (std::size_t j = 0; j < d; ++j) v(j) = model.components(r, j);
            const double lambda = model.eigenvalues[r];
            const double residual = (o.cov * v - lambda * v).norm();
            CHECK(residual <= 1e-6 * std::max(1.0, lambda));
            CHECK(lambda == doctest::Approx(o.values(r)).epsilon(1e-9));
        }
    }
}

TEST_CASE("rank-3 construction") {
    const auto x = rank3(200, 9);
    const auto full = fit_pca(x, 32);
    const auto ratios = full.explained_variance_ratio();
    CHECK(ratios[0] + ratios[1] + ratios[2] >= 0.999);

    const auto model = fit_pca(x, 3);
    const auto proj = transform(model, x);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.n_samples(); ++i)
        for (std::size_t j = 0; j < 32; ++j) {
            double rec = model.mean[j];
            for (std::size_t c = 0; c < 3; ++c) rec += proj(i, c) * model.components(c, j);
            worst = std::max(worst, std::abs(rec - x(i, j)));
        }
    CHECK(worst <= 1e-4);
}

TEST_CASE("transform") {
    SUBCASE("the mean row maps to zero") {
        const auto x = rows({{1, 2, 0}, {3, -2, 4}, {-1, 0, 2}, {1, 4, 2}});
        const auto model = fit_pca(x, 2);
        const auto z = transform(model, rows({{1, 1, 2}}));
        CHECK(std::abs(z(0, 0)) < 1e-12);
        CHECK(std::abs(z(0, 1)) < 1e-12);
    }
    SUBCASE("a full orthonormal basis preserves distances") {
        const auto x = gaussian(60, 10, 7, 3.0);
        const auto z = transform(fit_pca(x, 10), x);
        for (std::size_t i = 0; i < 60; ++i)
            for (std::size_t k = i + 1; k < 60; ++k) {
                const double before = dist(x.row(i), x.row(k)), after = dist(z.row(i), z.row(k));
                CHECK(std::abs(after - before) <= 1e-6 * before);
            }
    }
    SUBCASE("dimension mismatch") {
        const auto model = fit_pca(gaussian(10, 3, 1), 2);
        CHECK_THROWS_AS(transform(model, gaussian(2, 4, 1)), ContractError);
    }
}

TEST_CASE("row permutation leaves the projection unchanged up to component sign") {
    const auto x = anisotropic(80, 6, 21);
    Rng rng(3);
    std::vector<std::size_t> perm(80);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<float> shuffled;
    for (auto p : perm) shuffled.insert(shuffled.end(), x.row(p).begin(), x.row(p).end());
    const EmbeddingMatrix y(80, 6, shuffled);

    const auto zx = transform(fit_pca(x, 4), x);
    const auto zy = transform(fit_pca(y, 4), y);
    for (std::size_t c = 0; c < 4; ++c) {
        const double sign = (zx(perm[0], c) * zy(0, c) >= 0.0) ? 1.0 : -1.0;
        for (std::size_t i = 0; i < 80; ++i) CHECK(std::abs(zx(perm[i], c) - sign * zy(i, c)) <= 1e-5);
    }
}

TEST_CASE("components_for_variance") {
    PcaModel m;
    m.n_samples = 4;
    m.mean = {0, 0, 0};
    m.components = Matrix(3, 3);
    m.eigenvalues = {0.6, 0.3, 0.1};
    m.total_variance = 1.0;
    CHECK(components_for_variance(m, 0.8) == 2);
    CHECK(components_for_variance(m, 0.6) == 1);
    CHECK(components_for_variance(m, 1.0) == 3);
    CHECK_THROWS_AS(components_for_variance(m, 0.0), DomainError);
    CHECK_THROWS_AS(components_for_variance(m, 1.5), DomainError);

    PcaModel partial = m;
    partial.components = Matrix(2, 3);
    partial.eigenvalues.resize(2);
    CHECK_THROWS_AS(components_for_variance(partial, 0.5), ContractError);
}

TEST_CASE("isotropic Gaussian needs about half the components for half the variance") {
    const auto x = gaussian(2000, 16, 77);
    const auto model = fit_pca(x, 16);
    const std::size_t got = components_for_variance(model, 0.5);
    CHECK(got >= 7);
    CHECK(got <= 9);

    const auto o = oracle(x);
    double cum = 0.0, total = o.values.sum();
    std::size_t expect = 0;
    while (cum / total < 0.5) cum += o.values(expect++);
    CHECK(got == expect);
}

TEST_CASE("degenerate inputs") {
    CHECK_THROWS_AS(fit_pca(rows({{1, 2}, {1, 2}, {1, 2}}), 1), DegenerateInputError);
    CHECK_THROWS_AS(fit_pca(rows({{1, 2}}), 1), ContractError);
    CHECK_THROWS_AS(fit_pca(gaussian(10, 3, 1), 0), ContractError);
    CHECK_THROWS_AS(fit_pca(gaussian(10, 3, 1), 4), ContractError);
}

TEST_CASE("covariance is identical for any thread count") {
    const auto x = gaussian(3000, 20, 8);
    const auto a = fit_pca(x, 5, 1);
    const auto b = fit_pca(x, 5, 4);
    CHECK(a.components == b.components);
    CHECK(a.eigenvalues == b.eigenvalues);
}

TEST_CASE("jacobi on a known matrix") {
    Matrix a(2, 2);
    a(0, 0) = 2;
    a(0, 1) = a(1, 0) = 1;
    a(1, 1) = 2;
    const auto e = jacobi_eigen(a);
    CHECK(e.values[0] == doctest::Approx(3.0));
    CHECK(e.values[1] == doctest::Approx(1.0));
    CHECK(std::abs(std::abs(e.vectors(0, 0)) - std::sqrt(0.5)) < 1e-12);
}

TEST_CASE("save and load") {
    kprune::testing::TempDir dir("pca");
    const auto x = gaussian(30, 5, 3);
    const auto model = fit_pca(x, 3);
    save_pca(model, dir / "m");
    const auto back = load_pca(dir / "m");
    CHECK(back.n_components() == 3);
    CHECK(back.n_samples == 30);
    CHECK(back.eigenvalues == model.eigenvalues);
    for (std::size_t e = 0; e < model.components.data.size(); ++e)
        CHECK(back.components.data[e] == doctest::Approx(model.components.data[e]).epsilon(1e-6));
}
