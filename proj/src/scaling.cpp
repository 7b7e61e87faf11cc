#include "kprune/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "kprune/core.hpp"

namespace kprune {

FitWindow FitWindow::parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ContractError("window must be N_MIN:N_MAX, got \"" + text + "\"");
    auto bound = [&](const std::string& s, double open) {
        return s.empty() ? open : csv::parse<double>(s, "window \"" + text + "\"");
    };
    FitWindow w{bound(text.substr(0, colon), 0.0),
                bound(text.substr(colon + 1), std::numeric_limits<double>::infinity())};
    if (w.n_min > w.n_max) throw ContractError("window lower bound exceeds upper bound");
    return w;
}

PowerLawFit fit_power_law(const std::vector<CurvePoint>& points, const std::optional<FitWindow>& window) {
    PowerLawFit fit;
    std::vector<CurvePoint> used;
    std::set<double> seen;
    for (const auto& p : points) {
        if (!(p.n > 0.0) || !std::isfinite(p.n)) throw DomainError("N must be positive and finite");
        if (!(p.loss > 0.0) || !std::isfinite(p.loss))
            throw DomainError("loss at N=" + csv::num(p.n) + " is not positive");
        if (!seen.insert(p.n).second) throw DomainError("duplicate N=" + csv::num(p.n));
        if (window && p.n < window->n_min) {
            fit.excluded.push_back({p.n, "below window"});
        } else if (window && p.n > window->n_max) {
            fit.excluded.push_back({p.n, "above window"});
        } else {
            used.push_back(p);
        }
    }
    const std::size_t n = used.size();
    if (n < 3) throw DomainError("power-law fit needs at least 3 points, have " + std::to_string(n));

    double mx = 0.0, my = 0.0;
    for (const auto& p : used) {
        mx += std::log(p.n);
        my += std::log(p.loss);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : used) {
        const double dx = std::log(p.n) - mx, dy = std::log(p.loss) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (const auto& p : used) {
        const double r = std::log(p.loss) - (intercept + slope * std::log(p.n));
        ss_res += r * r;
    }
    fit.nu = -slope;
    fit.ln_prefactor = intercept;
    fit.stderr_nu = std::sqrt(ss_res / static_cast<double>(n - 2) / sxx);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    fit.n_used = n;
    return fit;
}

std::vector<RankedFit> compare_fits(const std::map<std::string, PowerLawFit>& fits) {
    std::vector<RankedFit> rows;
    for (const auto& [name, fit] : fits) rows.push_back({name, fit, {}});
    std::stable_sort(rows.begin(), rows.end(), [](const RankedFit& a, const RankedFit& b) { return a.fit.nu > b.fit.nu; });
    for (auto& a : rows)
        for (const auto& b : rows) {
            if (&a == &b) continue;
            const double lo = std::max(a.fit.nu - 2 * a.fit.stderr_nu, b.fit.nu - 2 * b.fit.stderr_nu);
            const double hi = std::min(a.fit.nu + 2 * a.fit.stderr_nu, b.fit.nu + 2 * b.fit.stderr_nu);
            if (lo <= hi) a.overlaps.push_back(b.strategy);
        }
    return rows;
}

std::string format_fit_table(const std::vector<RankedFit>& ranked) {
    std::size_t width = 8;
    for (const auto& r : ranked) width = std::max(width, r.strategy.size());
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %7s  %7s  %6s  %6s  %s\n", static_cast<int>(width), "strategy", "nu",
                  "stderr", "R2", "n_used", "overlaps(2se)");
    out << line;
    for (const auto& r : ranked) {
        std::string overlaps;
        for (const auto& o : r.overlaps) overlaps += (overlaps.empty() ? "" : ",") + o;
        std::snprintf(line, sizeof line, "%-*s  %7.3f  %7.3f  %6.3f  %6zu  %s\n", static_cast<int>(width),
                      r.strategy.c_str(), r.fit.nu, r.fit.stderr_nu, r.fit.r_squared, r.fit.n_used,
                      overlaps.empty() ? "-" : overlaps.c_str());
        out << line;
    }
    return out.str();
}

void write_fit_summary(const std::vector<RankedFit>& ranked, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "strategy,nu,stderr,r2,n_used\n";
    for (const auto& r : ranked)
        out << r.strategy << ',' << csv::num(r.fit.nu) << ',' << csv::num(r.fit.stderr_nu) << ','
            << csv::num(r.fit.r_squared) << ',' << r.fit.n_used << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<FitSummaryRow> read_fit_summary(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const std::vector<std::string> expected{"strategy", "nu", "stderr", "r2", "n_used"};
    if (table.header != expected) throw FormatError(path.string() + ": unexpected fit-summary header");
    std::vector<FitSummaryRow> rows;
    const auto where = path.string();
    for (const auto& c : table.rows)
        rows.push_back({c[0], csv::parse<double>(c[1], where), csv::parse<double>(c[2], where),
                        csv::parse<double>(c[3], where), csv::parse<std::size_t>(c[4], where)});
    return rows;
}

}  // namespace kprune
