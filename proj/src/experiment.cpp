#include "kprune/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "csv.hpp"
#include "json.hpp"
#include "kprune/metrics.hpp"
#include "kprune/pca.hpp"
#include "kprune/pruner.hpp"
#include "kprune/random.hpp"

namespace kprune {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Sub-seeds for the stages of a run, all derived from the manifest seed.
enum SeedStream : std::uint32_t { kSplitStream = 1, kRandomPruneStream = 2, kProbeStream = 3 };

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw FormatError("manifest: " + where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw FormatError("manifest: unknown key \"" + key + "\" in " + where);
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void check_fractions(const std::vector<double>& fs, const std::string& what) {
    for (double f : fs)
        if (!(f >= 0.0 && f < 1.0)) throw ContractError(what + " fraction " + csv::num(f) + " outside [0, 1)");
}

template <class F>
auto timed_stage(ExperimentReport& report, const std::string& stage, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
        report.stage_seconds.emplace_back(
            stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            finish();
        } else {
            auto r = body();
            finish();
            return r;
        }
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    } catch (const std::exception& e) {
        throw StageError(stage, Error("internal", e.what()));
    }
}

ojson fit_json(const PowerLawFit& f) {
    ojson j;
    j["nu"] = f.nu;
    j["stderr_nu"] = f.stderr_nu;
    j["ln_prefactor"] = f.ln_prefactor;
    j["r_squared"] = f.r_squared;
    j["n_used"] = f.n_used;
    ojson ex = ojson::array();
    for (const auto& e : f.excluded) ex.push_back({{"N", e.n}, {"reason", e.reason}});
    j["excluded"] = ex;
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------

RunManifest RunManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, path.parent_path());
}

RunManifest RunManifest::from_json_text(const std::string& text, const std::filesystem::path& base_dir) {
    RunManifest m;
    try {
        const auto doc = json::parse(text);
        reject_unknown_keys(doc, {"inputs", "pca", "kmeans", "pruning", "n_grid", "repeats", "probe", "fit_window",
                                  "seed", "threads"},
                            "manifest");

        const auto& in = doc.at("inputs");
        reject_unknown_keys(in, {"embeddings", "labels", "test_embeddings", "test_labels", "test_fraction"}, "inputs");
        m.embeddings = resolve(base_dir, in.at("embeddings").get<std::string>());
        m.labels = resolve(base_dir, in.at("labels").get<std::string>());
        if (in.contains("test_embeddings")) m.test_embeddings = resolve(base_dir, in["test_embeddings"].get<std::string>());
        if (in.contains("test_labels")) m.test_labels = resolve(base_dir, in["test_labels"].get<std::string>());
        m.test_fraction = in.value("test_fraction", m.test_fraction);

        if (doc.contains("pca") && !doc["pca"].is_null()) {
            const auto& p = doc["pca"];
            reject_unknown_keys(p, {"components", "variance"}, "pca");
            PcaSpec spec;
            spec.components = p.value("components", std::size_t{0});
            spec.variance = p.value("variance", 0.0);
            m.pca = spec;
        }

        const auto& km = doc.at("kmeans");
        reject_unknown_keys(km, {"k", "max_iter", "tol", "n_init"}, "kmeans");
        m.kmeans.k = km.at("k").get<std::size_t>();
        m.kmeans.max_iter = km.value("max_iter", m.kmeans.max_iter);
        m.kmeans.tol = km.value("tol", m.kmeans.tol);
        m.kmeans.n_init = km.value("n_init", m.kmeans.n_init);

        if (doc.contains("pruning")) {
            const auto& pr = doc["pruning"];
            reject_unknown_keys(pr, {"scope", "random_baseline", "random", "simple", "hard"}, "pruning");
            m.scope = parse_prune_scope(pr.value("scope", std::string("global")));
            m.random_baseline = pr.value("random_baseline", true);
            m.random_fractions = pr.value("random", std::vector<double>{});
            m.simple_fractions = pr.value("simple", std::vector<double>{});
            m.hard_fractions = pr.value("hard", std::vector<double>{});
        }

        if (doc.contains("n_grid")) {
            const auto& g = doc["n_grid"];
            if (g.is_array()) {
                m.n_grid.explicit_points = g.get<std::vector<std::size_t>>();
            } else {
                reject_unknown_keys(g, {"points", "min", "max"}, "n_grid");
                m.n_grid.points = g.value("points", m.n_grid.points);
                m.n_grid.min = g.value("min", std::size_t{0});
                m.n_grid.max = g.value("max", std::size_t{0});
            }
        }
        m.repeats = doc.value("repeats", m.repeats);

        if (doc.contains("probe")) {
            const auto& p = doc["probe"];
            reject_unknown_keys(p, {"epochs", "batch_size", "learning_rate", "l2_penalty"}, "probe");
            m.probe.epochs = p.value("epochs", m.probe.epochs);
            m.probe.batch_size = p.value("batch_size", m.probe.batch_size);
            m.probe.learning_rate = p.value("learning_rate", m.probe.learning_rate);
            m.probe.l2_penalty = p.value("l2_penalty", m.probe.l2_penalty);
        }
        if (doc.contains("fit_window") && !doc["fit_window"].is_null())
            m.fit_window = FitWindow::parse(doc["fit_window"].get<std::string>());
        m.seed = doc.value("seed", m.seed);
        m.threads = doc.value("threads", m.threads);
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

std::string RunManifest::to_json_text() const {
    ojson doc;
    ojson in;
    in["embeddings"] = embeddings.string();
    in["labels"] = labels.string();
    if (test_embeddings) in["test_embeddings"] = test_embeddings->string();
    if (test_labels) in["test_labels"] = test_labels->string();
    if (!test_embeddings) in["test_fraction"] = test_fraction;
    doc["inputs"] = in;
    if (pca) {
        ojson p;
        if (pca->components > 0)
            p["components"] = pca->components;
        else
            p["variance"] = pca->variance;
        doc["pca"] = p;
    } else {
        doc["pca"] = nullptr;
    }
    doc["kmeans"] = {{"k", kmeans.k}, {"max_iter", kmeans.max_iter}, {"tol", kmeans.tol}, {"n_init", kmeans.n_init}};
    doc["pruning"] = {{"scope", to_string(scope)},
                      {"random_baseline", random_baseline},
                      {"random", random_fractions},
                      {"simple", simple_fractions},
                      {"hard", hard_fractions}};
    if (!n_grid.explicit_points.empty())
        doc["n_grid"] = n_grid.explicit_points;
    else
        doc["n_grid"] = {{"points", n_grid.points}, {"min", n_grid.min}, {"max", n_grid.max}};
    doc["repeats"] = repeats;
    doc["probe"] = {{"epochs", probe.epochs},
                    {"batch_size", probe.batch_size},
                    {"learning_rate", probe.learning_rate},
                    {"l2_penalty", probe.l2_penalty}};
    if (fit_window)
        doc["fit_window"] = csv::num(fit_window->n_min) + ":" + csv::num(fit_window->n_max);
    doc["seed"] = seed;
    doc["threads"] = threads;
    return doc.dump(2);
}

void RunManifest::validate() const {
    if (test_embeddings.has_value() != test_labels.has_value())
        throw ContractError("manifest: test_embeddings and test_labels must be given together");
    if (!test_embeddings && !(test_fraction > 0.0 && test_fraction < 1.0))
        throw ContractError("manifest: test_fraction must lie in (0, 1)");
    if (pca) {
        if (pca->components == 0 && !(pca->variance > 0.0 && pca->variance <= 1.0))
            throw ContractError("manifest: pca needs components >= 1 or variance in (0, 1]");
    }
    kmeans.validate();
    check_fractions(random_fractions, "random");
    check_fractions(simple_fractions, "simple");
    check_fractions(hard_fractions, "hard");
    if (!random_baseline && random_fractions.empty() && simple_fractions.empty() && hard_fractions.empty())
        throw ContractError("manifest: no pruning strategies requested");
    for (std::size_t i = 1; i < n_grid.explicit_points.size(); ++i)
        if (n_grid.explicit_points[i] <= n_grid.explicit_points[i - 1])
            throw ContractError("manifest: n_grid must be strictly increasing");
    if (n_grid.explicit_points.empty() && n_grid.points < 3)
        throw ContractError("manifest: n_grid needs at least 3 points for a power-law fit");
    if (repeats < 1) throw ContractError("manifest: repeats must be at least 1");
    probe.validate();
}

std::vector<std::size_t> log_grid(std::size_t lo, std::size_t hi, std::size_t points) {
    if (lo < 1 || hi < lo) throw ContractError("log grid needs 1 <= lo <= hi");
    if (points < 1) throw ContractError("log grid needs at least one point");
    std::vector<std::size_t> out;
    const double a = std::log(static_cast<double>(lo)), b = std::log(static_cast<double>(hi));
    for (std::size_t i = 0; i < points; ++i) {
        const double t = points == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(points - 1);
        auto v = static_cast<std::size_t>(std::llround(std::exp(a + t * (b - a))));
        v = std::clamp(v, lo, hi);
        if (out.empty() || v > out.back()) out.push_back(v);
    }
    return out;
}

std::string strategy_name(PruneMethod method, double fraction) {
    if (method == PruneMethod::identity) return "random";
    const double pct = fraction * 100.0;
    std::string p = std::abs(pct - std::round(pct)) < 1e-9 ? std::to_string(std::llround(pct)) : csv::num(pct);
    std::replace(p.begin(), p.end(), '.', 'p');
    return to_string(method) + "_" + p;
}

// ---------------------------------------------------------------------------

ExperimentReport run_experiment(const RunManifest& manifest, const std::filesystem::path& out_dir) {
    manifest.validate();
    ExperimentReport report;
    report.manifest_json = manifest.to_json_text();
    std::filesystem::create_directories(out_dir);

    auto record = [&](const std::filesystem::path& p) {
        auto d = file_digest(p);
        report.artifacts[std::filesystem::relative(p, out_dir).generic_string()] = d;
        return d;
    };

    struct Loaded {
        EmbeddingMatrix x;
        LabelVector y;
        EmbeddingMatrix test_x;
        LabelVector test_y;
        std::string x_digest;
    };

    auto data = timed_stage(report, "load", [&] {
        auto x = read_embeddings(manifest.embeddings);
        auto y = read_labels(manifest.labels);
        if (x.n_samples() != y.n_samples()) throw ContractError("embeddings and labels disagree on N");
        report.input_digests[manifest.embeddings.string()] = file_digest(manifest.embeddings);
        report.input_digests[manifest.labels.string()] = file_digest(manifest.labels);
        const auto x_digest = report.input_digests[manifest.embeddings.string()];
        if (manifest.test_embeddings) {
            auto tx = read_embeddings(*manifest.test_embeddings);
            auto ty = read_labels(*manifest.test_labels);
            if (tx.n_samples() != ty.n_samples()) throw ContractError("test embeddings and labels disagree on N");
            if (tx.n_dims() != x.n_dims()) throw ContractError("test embeddings have a different dimension");
            if (ty.n_classes() != y.n_classes()) throw ContractError("test labels declare a different class count");
            report.input_digests[manifest.test_embeddings->string()] = file_digest(*manifest.test_embeddings);
            report.input_digests[manifest.test_labels->string()] = file_digest(*manifest.test_labels);
            return Loaded{std::move(x), std::move(y), std::move(tx), std::move(ty), x_digest};
        }
        // Held-out split: the pool keeps N - round(f N) rows.
        const std::size_t n = x.n_samples();
        auto pool = prune_random(n, manifest.test_fraction, derive_seed(manifest.seed, kSplitStream, 0), x_digest);
        KeepList test;
        test.source_n = n;
        test.method = PruneMethod::subsample;
        test.fraction_removed = manifest.test_fraction;
        test.seed = pool.seed;
        test.parent_digest = x_digest;
        std::size_t at = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (at < pool.size() && pool.indices[at] == i)
                ++at;
            else
                test.indices.push_back(i);
        }
        if (test.indices.empty()) throw ContractError("test split is empty");
        std::filesystem::create_directories(out_dir / "split");
        write_keeplist(pool, out_dir / "split" / "pool.json");
        write_keeplist(test, out_dir / "split" / "test.json");
        record(out_dir / "split" / "pool.json");
        record(out_dir / "split" / "test.json");
        return Loaded{gather(x, pool), gather(y, pool), gather(x, test), gather(y, test), x_digest};
    });

    const std::size_t n_pool = data.x.n_samples();

    auto cluster_space = timed_stage(report, "pca", [&]() -> std::optional<EmbeddingMatrix> {
        if (!manifest.pca) return std::nullopt;
        std::size_t m = manifest.pca->components;
        PcaModel model;
        if (m == 0) {
            model = fit_pca(data.x, std::min(n_pool - 1, data.x.n_dims()), manifest.threads);
            m = components_for_variance(model, manifest.pca->variance);
            model.components.data.resize(m * model.components.cols);
            model.components.rows = m;
            model.eigenvalues.resize(m);
        } else {
            model = fit_pca(data.x, m, manifest.threads);
        }
        save_pca(model, out_dir / "pca");
        for (const char* suffix : {".mean.emb", ".components.emb", ".json"}) record(out_dir / ("pca" + std::string(suffix)));
        return transform(model, data.x);
    });

    auto scores = timed_stage(report, "kmeans", [&] {
        auto cfg = manifest.kmeans;
        cfg.seed = manifest.seed;
        cfg.threads = manifest.threads;
        const auto model = kmeans_fit(cluster_space ? *cluster_space : data.x, cfg);
        save_kmeans(model, out_dir / "kmeans");
        std::vector<float> dist(model.distances.begin(), model.distances.end());
        write_embeddings(EmbeddingMatrix(n_pool, 1, std::move(dist)), out_dir / "kmeans.scores.emb");
        for (const char* suffix : {".centroids.emb", ".assignments.lbl", ".json", ".scores.emb"})
            record(out_dir / ("kmeans" + std::string(suffix)));
        return DistanceScores{model.distances, model.assignments, report.artifacts.at("kmeans.scores.emb")};
    });

    timed_stage(report, "prune", [&] {
        auto add = [&](KeepList kl) {
            StrategyResult s;
            s.name = strategy_name(kl.method, kl.fraction_removed);
            s.keep = std::move(kl);
            report.strategies.push_back(std::move(s));
        };
        if (manifest.random_baseline) add(KeepList::identity(n_pool, data.x_digest));
        for (std::size_t i = 0; i < manifest.random_fractions.size(); ++i)
            add(prune_random(n_pool, manifest.random_fractions[i],
                             derive_seed(manifest.seed, kRandomPruneStream, static_cast<std::uint32_t>(i)),
                             data.x_digest));
        for (double f : manifest.simple_fractions) add(prune_simple(scores, f, manifest.scope));
        for (double f : manifest.hard_fractions) add(prune_hard(scores, f, manifest.scope));

        std::set<std::string> names;
        for (auto& s : report.strategies) {
            if (!names.insert(s.name).second) throw ContractError("duplicate strategy " + s.name);
            std::filesystem::create_directories(out_dir / s.name);
            s.keep_path = out_dir / s.name / "keep.json";
            write_keeplist(s.keep, s.keep_path);
            s.keep_digest = record(s.keep_path);
        }
    });

    timed_stage(report, "n_grid", [&] {
        std::size_t smallest = n_pool;
        for (const auto& s : report.strategies) smallest = std::min(smallest, s.keep.size());
        if (!manifest.n_grid.explicit_points.empty()) {
            report.n_grid = manifest.n_grid.explicit_points;
        } else {
            const std::size_t lo = manifest.n_grid.min ? manifest.n_grid.min : 10 * std::size_t{data.y.n_classes()};
            const std::size_t hi = manifest.n_grid.max ? manifest.n_grid.max : smallest;
            report.n_grid = log_grid(lo, hi, manifest.n_grid.points);
        }
        if (report.n_grid.front() < data.y.n_classes())
            throw ContractError("N-grid entry " + std::to_string(report.n_grid.front()) + " is below the class count " +
                                std::to_string(data.y.n_classes()));
        for (const auto& s : report.strategies)
            for (auto n : report.n_grid)
                if (n > s.keep.size())
                    throw ContractError("N-grid entry N=" + std::to_string(n) + " exceeds the " +
                                        std::to_string(s.keep.size()) + " samples kept by strategy " + s.name);
    });

    timed_stage(report, "balance", [&] {
        report.balance_unpruned = balance(histogram(data.y));
        report.balance_path = out_dir / "balance.csv";
        std::ofstream out(report.balance_path, std::ios::trunc);
        out << "strategy,method,fraction_removed,n_kept,balance\n";
        for (auto& s : report.strategies) {
            s.balance = balance(histogram(data.y, s.keep));
            out << s.name << ',' << to_string(s.keep.method) << ',' << csv::num(s.keep.fraction_removed) << ','
                << s.keep.size() << ',' << csv::num(s.balance) << '\n';
        }
        out.close();
        if (!out) throw IoError("write failed for " + report.balance_path.string());
        report.balance_digest = record(report.balance_path);
    });

    timed_stage(report, "curves", [&] {
        auto cfg = manifest.probe;
        cfg.seed = derive_seed(manifest.seed, kProbeStream, 0);
        for (auto& s : report.strategies) {
            s.curve = learning_curve(data.x, data.y, s.keep, data.test_x, data.test_y, report.n_grid,
                                     manifest.repeats, cfg, manifest.threads);
            s.curve_path = out_dir / s.name / "curve.csv";
            write_learning_curve(s.curve, s.curve_path);
            s.curve_digest = record(s.curve_path);
        }
    });

    timed_stage(report, "fits", [&] {
        std::map<std::string, PowerLawFit> fits;
        for (auto& s : report.strategies) {
            std::vector<CurvePoint> pts;
            for (const auto& r : s.curve.rows) pts.push_back({static_cast<double>(r.n), r.mean_loss});
            s.fit = fit_power_law(pts, manifest.fit_window);
            fits[s.name] = *s.fit;
        }
        report.ranking = compare_fits(fits);
        report.fits_path = out_dir / "fits.csv";
        write_fit_summary(report.ranking, report.fits_path);
        report.fits_digest = record(report.fits_path);
    });

    timed_stage(report, "report", [&] {
        ojson doc;
        doc["manifest"] = ojson::parse(report.manifest_json);
        doc["inputs"] = report.input_digests;
        doc["n_grid"] = report.n_grid;
        doc["balance_unpruned"] = report.balance_unpruned;
        ojson strategies = ojson::array();
        for (const auto& s : report.strategies) {
            ojson j;
            j["name"] = s.name;
            j["method"] = to_string(s.keep.method);
            j["scope"] = to_string(s.keep.scope);
            j["fraction_removed"] = s.keep.fraction_removed;
            j["n_kept"] = s.keep.size();
            j["balance"] = s.balance;
            j["keep"] = {{"path", std::filesystem::relative(s.keep_path, out_dir).generic_string()},
                         {"digest", s.keep_digest}};
            j["curve"] = {{"path", std::filesystem::relative(s.curve_path, out_dir).generic_string()},
                          {"digest", s.curve_digest}};
            j["fit"] = fit_json(*s.fit);
            strategies.push_back(j);
        }
        doc["strategies"] = strategies;
        ojson ranking = ojson::array();
        for (const auto& r : report.ranking) ranking.push_back({{"strategy", r.strategy}, {"nu", r.fit.nu},
                                                                 {"stderr_nu", r.fit.stderr_nu},
                                                                 {"overlaps", r.overlaps}});
        doc["ranking"] = ranking;
        doc["artifacts"] = report.artifacts;
        ojson stages = ojson::object();
        for (const auto& [name, secs] : report.stage_seconds) stages[name] = secs;
        doc["stage_seconds"] = stages;
        std::ofstream out(out_dir / "report.json", std::ios::trunc);
        out << doc.dump(2) << '\n';
        if (!out) throw IoError("write failed for report.json");
    });
    return report;
}

void verify_report(const std::filesystem::path& report_path) {
    std::ifstream in(report_path);
    if (!in) throw IoError("cannot open " + report_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("report " + report_path.string() + ": " + e.what());
    }
    const auto base = report_path.parent_path();
    for (const auto& [rel, digest] : doc.at("artifacts").items()) {
        const auto p = base / rel;
        if (!std::filesystem::exists(p)) throw FormatError("report references missing file " + rel);
        if (file_digest(p) != digest.get<std::string>()) throw FormatError("digest mismatch for " + rel);
    }
}

}  // namespace kprune
