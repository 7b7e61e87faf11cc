#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kprune/core.hpp"
#include "kprune/kmeans.hpp"
#include "kprune/probe.hpp"
#include "kprune/scaling.hpp"

namespace kprune {

/// Error raised by `run_experiment`; keeps the inner tag and names the stage.
class StageError : public Error {
public:
    StageError(const std::string& stage, const Error& inner)
        : Error(inner.tag(), "stage " + stage + ": " + inner.what()), stage_(stage) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct PcaSpec {
    std::size_t components = 0;  // used when nonzero
    double variance = 0.0;       // otherwise the smallest count reaching this fraction
};

struct NGridSpec {
    std::vector<std::size_t> explicit_points;
    std::size_t points = 10;
    std::size_t min = 0;  // 0: 10 * n_classes
    std::size_t max = 0;  // 0: smallest keep-list
};

/// Declarative description of one pruning-vs-scaling experiment.
struct RunManifest {
    std::filesystem::path embeddings;
    std::filesystem::path labels;
    std::optional<std::filesystem::path> test_embeddings;
    std::optional<std::filesystem::path> test_labels;
    double test_fraction = 0.2;  // used when no test files are given

    std::optional<PcaSpec> pca;
    KMeansConfig kmeans;

    PruneScope scope = PruneScope::global;
    bool random_baseline = true;  // identity keep-list, randomly subsampled per N
    std::vector<double> random_fractions;
    std::vector<double> simple_fractions;
    std::vector<double> hard_fractions;

    NGridSpec n_grid;
    std::size_t repeats = 20;
    ProbeConfig probe;
    std::optional<FitWindow> fit_window;

    std::uint64_t seed = 0;
    unsigned threads = 1;

    /// Relative input paths resolve against the manifest's directory.
    static RunManifest load(const std::filesystem::path& path);
    static RunManifest from_json_text(const std::string& text, const std::filesystem::path& base_dir);
    std::string to_json_text() const;

    void validate() const;
};

/// Log-spaced, deduplicated, strictly increasing grid of `points` values in [lo, hi].
std::vector<std::size_t> log_grid(std::size_t lo, std::size_t hi, std::size_t points);

/// Strategy label such as "simple_40" for fraction 0.4.
std::string strategy_name(PruneMethod method, double fraction);

struct StrategyResult {
    std::string name;
    KeepList keep;
    double balance = 0.0;
    std::filesystem::path keep_path;
    std::string keep_digest;
    std::filesystem::path curve_path;
    std::string curve_digest;
    LearningCurve curve;
    std::optional<PowerLawFit> fit;
};

struct ExperimentReport {
    std::string manifest_json;
    std::map<std::string, std::string> input_digests;
    std::vector<std::size_t> n_grid;
    double balance_unpruned = 0.0;
    std::vector<StrategyResult> strategies;  // manifest order
    std::vector<RankedFit> ranking;
    std::filesystem::path balance_path;
    std::string balance_digest;
    std::filesystem::path fits_path;
    std::string fits_digest;
    std::vector<std::pair<std::string, double>> stage_seconds;

    /// Digest of every emitted artifact, keyed by path relative to the output directory.
    std::map<std::string, std::string> artifacts;
};

/// PCA (optional) -> k-means -> keep-lists -> balance -> learning curves -> fits.
/// Writes `out/<strategy>/{keep.json,curve.csv}`, `balance.csv`, `fits.csv`,
/// `kmeans.*` and `report.json`.
ExperimentReport run_experiment(const RunManifest& manifest, const std::filesystem::path& out_dir);

/// Re-hashes every file listed in a report.json; throws FormatError on any
/// missing file or digest mismatch.
void verify_report(const std::filesystem::path& report_path);

}  // namespace kprune
