#include <fstream>

#include "doctest.h"
#include "kprune/experiment.hpp"
#include "kprune/metrics.hpp"
#include "kprune/synth.hpp"
#include "test_util.hpp"

using namespace kprune;
using kprune::testing::TempDir;

namespace {

// Writes a small 4-class mixture and returns a manifest over it.
RunManifest small_manifest(const TempDir& dir) {
    SynthSpec spec;
    spec.n_classes = 4;
    spec.n_dims = 8;
    spec.per_class = 150;
    spec.test_per_class = 25;
    spec.sigma = 0.4;
    spec.seed = 2;
    const auto data = synthesize(spec);
    write_embeddings(data.train_x, dir / "train.emb");
    write_labels(data.train_y, dir / "train.lbl");
    write_embeddings(*data.test_x, dir / "test.emb");
    write_labels(*data.test_y, dir / "test.lbl");

    const std::string text = R"({
      "inputs": {"embeddings": "train.emb", "labels": "train.lbl",
                 "test_embeddings": "test.emb", "test_labels": "test.lbl"},
      "kmeans": {"k": 4, "n_init": 2},
      "pruning": {"scope": "global", "simple": [0.2, 0.4], "hard": [0.2, 0.4]},
      "n_grid": {"points": 4, "min": 40},
      "repeats": 3,
      "probe": {"epochs": 20},
      "seed": 11
    })";
    return RunManifest::from_json_text(text, dir.path());
}

}  // namespace

TEST_CASE("end-to-end run on a small mixture") {
    TempDir dir("exp");
    const auto manifest = small_manifest(dir);
    const auto report = run_experiment(manifest, dir / "out");

    REQUIRE(report.strategies.size() == 5);
    CHECK(report.strategies[0].name == "random");
    CHECK(report.strategies[1].name == "simple_20");
    CHECK(report.strategies[4].name == "hard_40");
    CHECK(report.n_grid.front() == 40);
    CHECK(report.n_grid.back() == 360);  // 600 - round(0.4 * 600)
    CHECK(report.ranking.size() == 5);

    const auto labels = read_labels(dir / "train.lbl");
    for (const auto& s : report.strategies) {
        CHECK(std::filesystem::exists(s.keep_path));
        CHECK(read_keeplist(s.keep_path) == s.keep);
        CHECK(read_learning_curve(s.curve_path) == s.curve);
        CHECK(s.curve.rows.size() == report.n_grid.size());
        CHECK(std::abs(s.balance - balance(histogram(labels, s.keep))) <= 1e-12);
        REQUIRE(s.fit.has_value());
        CHECK(s.fit->n_used == report.n_grid.size());
    }
    CHECK(report.strategies[1].keep.parent_digest == report.artifacts.at("kmeans.scores.emb"));
    CHECK(report.strategies[0].keep.parent_digest == file_digest(dir / "train.emb"));
    CHECK(read_fit_summary(dir / "out" / "fits.csv").size() == 5);
    CHECK(std::filesystem::exists(dir / "out" / "report.json"));
    verify_report(dir / "out" / "report.json");

    SUBCASE("an identical rerun produces identical artifacts") {
        auto threaded = manifest;
        threaded.threads = 3;
        const auto again = run_experiment(threaded, dir / "out2");
        CHECK(again.artifacts == report.artifacts);
    }

    SUBCASE("tampering is detected") {
        std::ofstream(dir / "out" / "fits.csv", std::ios::app) << "x\n";
        CHECK_THROWS_AS(verify_report(dir / "out" / "report.json"), FormatError);
    }
}

TEST_CASE("an oversized N-grid aborts and names the strategy") {
    TempDir dir("exp_grid");
    auto manifest = small_manifest(dir);
    manifest.n_grid.explicit_points = {40, 400};
    try {
        run_experiment(manifest, dir / "out");
        FAIL("expected an error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "n_grid");
        CHECK(e.tag() == "contract");
        const std::string msg = e.what();
        CHECK(msg.find("N=400") != std::string::npos);
        CHECK(msg.find("simple_40") != std::string::npos);
    }
}

TEST_CASE("held-out split when no test files are given") {
    TempDir dir("exp_split");
    auto manifest = small_manifest(dir);
    manifest.test_embeddings.reset();
    manifest.test_labels.reset();
    manifest.test_fraction = 0.25;
    manifest.simple_fractions = {0.2};
    manifest.hard_fractions.clear();
    manifest.n_grid.explicit_points = {40, 100, 300};
    const auto report = run_experiment(manifest, dir / "out");
    const auto pool = read_keeplist(dir / "out" / "split" / "pool.json");
    const auto test = read_keeplist(dir / "out" / "split" / "test.json");
    CHECK(pool.size() == 450);
    CHECK(test.size() == 150);
    std::vector<bool> seen(600, false);
    for (auto i : pool.indices) seen[i] = true;
    for (auto i : test.indices) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
    }
    CHECK(report.strategies[0].keep.source_n == 450);
}

TEST_CASE("manifest parsing") {
    const std::filesystem::path base = "/data";
    const auto m = RunManifest::from_json_text(
        R"({"inputs": {"embeddings": "x.emb", "labels": "/abs/y.lbl"}, "kmeans": {"k": 3},
            "n_grid": [10, 20, 40], "fit_window": "15:", "pca": {"variance": 0.8}})",
        base);
    CHECK(m.embeddings == base / "x.emb");
    CHECK(m.labels == "/abs/y.lbl");
    CHECK(m.kmeans.k == 3);
    CHECK(m.n_grid.explicit_points == std::vector<std::size_t>{10, 20, 40});
    CHECK(m.fit_window->n_min == 15);
    CHECK(m.pca->variance == 0.8);
    CHECK(m.scope == PruneScope::global);
    CHECK(m.repeats == 20);

    const auto round = RunManifest::from_json_text(m.to_json_text(), base);
    CHECK(round.to_json_text() == m.to_json_text());

    auto bad = [&](const std::string& text) { return RunManifest::from_json_text(text, base); };
    CHECK_THROWS_AS(bad(R"({"inputs": {"embeddings": "x", "labels": "y"}, "kmeans": {"k": 3}, "extra": 1})"),
                    FormatError);
    CHECK_THROWS_AS(bad(R"({"inputs": {"embeddings": "x", "labels": "y"}})"), FormatError);
    CHECK_THROWS_AS(bad(R"({"inputs": {"embeddings": "x", "labels": "y"}, "kmeans": {"k": "three"}})"), FormatError);
    CHECK_THROWS(bad(R"({"inputs": {"embeddings": "x", "labels": "y"}, "kmeans": {"k": 3},
                         "pruning": {"simple": [1.5]}})").validate());
    CHECK_THROWS(bad("not json"));
}

TEST_CASE("log_grid and strategy names") {
    CHECK(log_grid(50, 12000, 6) == std::vector<std::size_t>{50, 150, 448, 1340, 4010, 12000});
    CHECK(log_grid(10, 12, 10) == std::vector<std::size_t>{10, 11, 12});
    CHECK(log_grid(7, 7, 3) == std::vector<std::size_t>{7});
    CHECK(strategy_name(PruneMethod::identity, 0.0) == "random");
    CHECK(strategy_name(PruneMethod::simple, 0.4) == "simple_40");
    CHECK(strategy_name(PruneMethod::hard, 0.125) == "hard_12p5");
    CHECK(strategy_name(PruneMethod::random, 0.1) == "random_10");
}

TEST_CASE("synthetic mixture") {
    SynthSpec spec;
    spec.n_classes = 3;
    spec.n_dims = 5;
    spec.per_class = 4;
    spec.radius = 2.0;
    spec.sigma = 0.0;
    spec.seed = 9;
    const auto d = synthesize(spec);
    CHECK(d.train_x.n_samples() == 12);
    CHECK_FALSE(d.test_x.has_value());
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(d.train_y[i] == i / 4);
        double norm = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(d.train_x(i, j) == static_cast<float>(d.means(i / 4, j)));
            norm += d.means(i / 4, j) * d.means(i / 4, j);
        }
        CHECK(std::sqrt(norm) == doctest::Approx(2.0));
    }
    CHECK(d.train_y.class_names()[2] == "class_2");
    spec.sigma = 0.3;
    spec.test_per_class = 2;
    const auto a = synthesize(spec), b = synthesize(spec);
    CHECK(a.train_x == b.train_x);
    CHECK(*a.test_x == *b.test_x);
    CHECK(a.test_x->n_samples() == 6);
}
