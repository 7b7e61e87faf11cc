#include <cmath>

#include "doctest.h"
#include "kprune/random.hpp"
#include "kprune/scaling.hpp"
#include "test_util.hpp"

using namespace kprune;

namespace {

std::vector<CurvePoint> power_law(double a, double nu, std::size_t count, double lo, double hi, Rng* noise = nullptr,
                                  double sigma = 0.0) {
    std::vector<CurvePoint> pts;
    for (std::size_t i = 0; i < count; ++i) {
        const double n = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
        double loss = a * std::pow(n, -nu);
        if (noise) loss *= std::exp(sigma * noise->normal());
        pts.push_back({n, loss});
    }
    return pts;
}

PowerLawFit with(double nu, double se) {
    PowerLawFit f;
    f.nu = nu;
    f.stderr_nu = se;
    f.n_used = 5;
    f.r_squared = 0.99;
    return f;
}

}  // namespace

TEST_CASE("noiseless power law is recovered exactly") {
    const auto fit = fit_power_law(power_law(2.0, 0.4, 20, 1e2, 1e5));
    CHECK(std::abs(fit.nu - 0.4) <= 1e-10);
    CHECK(fit.stderr_nu <= 1e-10);
    CHECK(fit.r_squared >= 1.0 - 1e-12);
    CHECK(std::abs(fit.ln_prefactor - std::log(2.0)) <= 1e-9);
    CHECK(fit.n_used == 20);
    CHECK(fit.excluded.empty());
}

TEST_CASE("one percent log-normal noise") {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const auto fit = fit_power_law(power_law(2.0, 0.4, 20, 1e2, 1e5, &rng, 0.01));
        CHECK(std::abs(fit.nu - 0.4) <= 0.02);
        CHECK(fit.stderr_nu > 0.0);
        sum += fit.nu;
    }
    CHECK(std::abs(sum / 100.0 - 0.4) <= 0.005);
}

TEST_CASE("scale equivariance") {
    Rng rng(3);
    const auto pts = power_law(1.3, 0.25, 12, 10, 1e4, &rng, 0.05);
    const auto base = fit_power_law(pts);
    auto scaled = pts;
    for (auto& p : scaled) p.loss *= 7.0;
    const auto f = fit_power_law(scaled);
    CHECK(std::abs(f.nu - base.nu) <= 1e-12);
    CHECK(std::abs(f.stderr_nu - base.stderr_nu) <= 1e-12);
    CHECK(std::abs(f.r_squared - base.r_squared) <= 1e-12);
    CHECK(std::abs(f.ln_prefactor - base.ln_prefactor - std::log(7.0)) <= 1e-12);

    auto rescaled = pts;
    for (auto& p : rescaled) p.n *= 3.0;
    CHECK(std::abs(fit_power_law(rescaled).nu - base.nu) <= 1e-12);
}

TEST_CASE("windows") {
    Rng rng(5);
    const auto pts = power_law(2.0, 0.3, 10, 10, 1e4, &rng, 0.05);
    const FitWindow w{pts[2].n, pts[7].n};
    const auto fit = fit_power_law(pts, w);
    const auto manual = fit_power_law(std::vector<CurvePoint>(pts.begin() + 2, pts.begin() + 8));
    CHECK(fit.nu == manual.nu);
    CHECK(fit.stderr_nu == manual.stderr_nu);
    CHECK(fit.n_used == 6);
    REQUIRE(fit.excluded.size() == 4);
    CHECK(fit.excluded[0].reason == "below window");
    CHECK(fit.excluded[3].reason == "above window");
    CHECK_THROWS_AS(fit_power_law(pts, FitWindow{pts[8].n, pts[9].n}), DomainError);
}

TEST_CASE("fit errors") {
    CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, 0.5}}), DomainError);
    CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, 0.5}, {3, 0.0}}), DomainError);
    CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, 0.5}, {2, 0.4}}), DomainError);
    CHECK_THROWS_AS(fit_power_law({{0, 1}, {2, 0.5}, {3, 0.4}}), DomainError);
}

TEST_CASE("FitWindow::parse") {
    auto w = FitWindow::parse("100:5000");
    CHECK(w.n_min == 100);
    CHECK(w.n_max == 5000);
    w = FitWindow::parse(":5000");
    CHECK(w.n_min == 0);
    w = FitWindow::parse("100:");
    CHECK(std::isinf(w.n_max));
    CHECK_THROWS_AS(FitWindow::parse("100"), ContractError);
    CHECK_THROWS_AS(FitWindow::parse("500:100"), ContractError);
    CHECK_THROWS(FitWindow::parse("abc:100"));
}

TEST_CASE("compare_fits") {
    auto one = compare_fits({{"only", with(0.4, 0.01)}});
    REQUIRE(one.size() == 1);
    CHECK(one[0].overlaps.empty());

    const auto ranked = compare_fits({{"random", with(0.39, 0.005)}, {"simple_40", with(0.42, 0.005)}});
    CHECK(ranked[0].strategy == "simple_40");
    CHECK(ranked[1].strategy == "random");
    CHECK(ranked[0].overlaps.empty());
    CHECK(ranked[1].overlaps.empty());

    const auto same = compare_fits({{"a", with(0.4, 0.01)}, {"b", with(0.4, 0.01)}});
    CHECK(same[0].overlaps == std::vector<std::string>{same[1].strategy});
    CHECK(same[1].overlaps == std::vector<std::string>{same[0].strategy});

    const auto table = format_fit_table(ranked);
    CHECK(table.find("simple_40") < table.find("random"));
    CHECK(table.find("0.420") != std::string::npos);
}

TEST_CASE("fit summary round trip") {
    kprune::testing::TempDir dir("fits");
    const auto ranked = compare_fits({{"random", with(0.391234567, 0.0051)}, {"hard_40", with(0.1, 0.2)}});
    write_fit_summary(ranked, dir / "fits.csv");
    const auto back = read_fit_summary(dir / "fits.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].strategy == "random");
    CHECK(back[0].nu == 0.391234567);
    CHECK(back[0].stderr_nu == 0.0051);
    CHECK(back[1].n_used == 5);
}
