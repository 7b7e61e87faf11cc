#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kprune {

struct CurvePoint {
    double n;
    double loss;
};

struct Exclusion {
    double n;
    std::string reason;
};

/// loss ~ exp(ln_prefactor) * N^-nu, fitted by OLS on (ln N, ln loss).
/// stderr_nu is the OLS standard error of the slope.
struct PowerLawFit {
    double nu = 0.0;
    double ln_prefactor = 0.0;
    double stderr_nu = 0.0;
    double r_squared = 0.0;
    std::size_t n_used = 0;
    std::vector<Exclusion> excluded;
};

/// Inclusive [n_min, n_max] window of N values to keep.
struct FitWindow {
    double n_min;
    double n_max;

    /// Parses "N_MIN:N_MAX"; either side may be empty for an open bound.
    static FitWindow parse(const std::string& text);
};

PowerLawFit fit_power_law(const std::vector<CurvePoint>& points, const std::optional<FitWindow>& window = std::nullopt);

struct RankedFit {
    std::string strategy;
    PowerLawFit fit;
    std::vector<std::string> overlaps;  // strategies whose nu +/- 2 stderr interval intersects this one
};

/// Rows sorted by nu descending (ties by strategy name).
std::vector<RankedFit> compare_fits(const std::map<std::string, PowerLawFit>& fits);

/// Fixed-width text table, nu and its standard error to 3 decimals.
std::string format_fit_table(const std::vector<RankedFit>& ranked);

/// Columns: strategy,nu,stderr,r2,n_used
void write_fit_summary(const std::vector<RankedFit>& ranked, const std::filesystem::path& path);

struct FitSummaryRow {
    std::string strategy;
    double nu, stderr_nu, r_squared;
    std::size_t n_used;
};
std::vector<FitSummaryRow> read_fit_summary(const std::filesystem::path& path);

}  // namespace kprune
