// kprune: cluster-based dataset pruning and learning-curve scaling analysis.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "kprune/core.hpp"
#include "kprune/experiment.hpp"
#include "kprune/kmeans.hpp"
#include "kprune/metrics.hpp"
#include "kprune/pca.hpp"
#include "kprune/probe.hpp"
#include "kprune/pruner.hpp"
#include "kprune/scaling.hpp"
#include "kprune/synth.hpp"

namespace fs = std::filesystem;
using namespace kprune;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string out;
};

std::string require_out(const Globals& g, const char* cmd) {
    if (g.out.empty()) throw ContractError(std::string(cmd) + " requires --out");
    return g.out;
}

void ensure_dir(const fs::path& p) {
    if (!p.empty()) fs::create_directories(p);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    SynthSpec spec;
};

void cmd_synth(const SynthArgs& a, const Globals& g) {
    auto spec = a.spec;
    spec.seed = g.seed;
    const std::string prefix = require_out(g, "synth");
    ensure_dir(fs::path(prefix).parent_path());
    const auto data = synthesize(spec);
    write_embeddings(data.train_x, prefix + ".emb");
    write_labels(data.train_y, prefix + ".lbl");
    if (data.test_x) {
        write_embeddings(*data.test_x, prefix + ".test.emb");
        write_labels(*data.test_y, prefix + ".test.lbl");
    }
    std::cout << "synth: " << data.train_x.n_samples() << "x" << data.train_x.n_dims() << " -> " << prefix << ".emb";
    if (data.test_x) std::cout << " (+" << data.test_x->n_samples() << " test rows)";
    std::cout << '\n';
}

struct PcaArgs {
    std::string emb;
    std::size_t components = 0;
    double variance = 0.0;
};

void cmd_pca(const PcaArgs& a, const Globals& g) {
    const fs::path out = require_out(g, "pca");
    ensure_dir(out);
    const auto x = read_embeddings(a.emb);
    const std::size_t full = std::min(x.n_samples() - 1, x.n_dims());
    auto model = fit_pca(x, a.components ? a.components : full, g.threads);
    {
        std::ofstream csv(out / "explained_variance.csv", std::ios::trunc);
        csv << "component,eigenvalue,ratio,cumulative\n";
        double cum = 0.0;
        const auto ratios = model.explained_variance_ratio();
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            cum += ratios[i];
            csv << i + 1 << ',' << model.eigenvalues[i] << ',' << ratios[i] << ',' << cum << '\n';
        }
    }
    if (!a.components && a.variance > 0.0) {
        const std::size_t m = components_for_variance(model, a.variance);
        model.components.data.resize(m * model.components.cols);
        model.components.rows = m;
        model.eigenvalues.resize(m);
        std::cout << "pca: " << m << " components reach " << fixed(a.variance, 3) << " of the variance\n";
    }
    save_pca(model, out / "pca");
    write_embeddings(transform(model, x), out / "projected.emb");
    std::cout << "pca: projected " << x.n_samples() << "x" << x.n_dims() << " -> " << model.n_components()
              << " dims under " << out.string() << '\n';
}

struct ClusterArgs {
    std::string emb;
    KMeansConfig cfg;
    std::vector<std::size_t> sweep;
};

void cmd_cluster(const ClusterArgs& a, const Globals& g) {
    const fs::path out = require_out(g, "cluster");
    ensure_dir(out);
    const auto x = read_embeddings(a.emb);
    auto cfg = a.cfg;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    if (!a.sweep.empty()) {
        std::ofstream csv(out / "sweep.csv", std::ios::trunc);
        csv << "k,inertia\n";
        for (const auto& row : sweep_k(x, a.sweep, cfg)) {
            csv << row.k << ',' << row.inertia << '\n';
            std::cout << "k=" << row.k << " inertia=" << row.inertia << '\n';
        }
    }
    const auto model = kmeans_fit(x, cfg);
    save_kmeans(model, out / "kmeans");
    std::vector<float> dist(model.distances.begin(), model.distances.end());
    write_embeddings(EmbeddingMatrix(x.n_samples(), 1, std::move(dist)), out / "scores.emb");
    std::cout << "cluster: k=" << cfg.k << " inertia=" << model.inertia << " iterations=" << model.iterations_run
              << (model.converged ? " converged" : " max_iter reached") << '\n';
}

struct PruneArgs {
    std::string scores;
    std::string assignments;
    std::string labels;
    std::string method = "simple";
    std::string scope = "global";
    double fraction = 0.0;
};

void cmd_prune(const PruneArgs& a, const Globals& g) {
    const fs::path out = require_out(g, "prune");
    ensure_dir(out.parent_path());
    const auto method = parse_prune_method(a.method);
    const auto scope = parse_prune_scope(a.scope);
    const auto score_matrix = read_embeddings(a.scores);
    if (score_matrix.n_dims() != 1) throw FormatError("scores file must have exactly one column");
    const std::size_t n = score_matrix.n_samples();

    KeepList kl;
    if (method == PruneMethod::random) {
        kl = prune_random(n, a.fraction, g.seed, file_digest(a.scores));
    } else if (method == PruneMethod::simple || method == PruneMethod::hard) {
        DistanceScores s;
        s.distance.assign(score_matrix.values().begin(), score_matrix.values().end());
        s.cluster.assign(n, 0);
        s.digest = file_digest(a.scores);
        if (!a.assignments.empty()) {
            const auto asg = read_labels(a.assignments);
            if (asg.n_samples() != n) throw ContractError("assignments and scores disagree on N");
            s.cluster.assign(asg.ids().begin(), asg.ids().end());
        } else if (scope == PruneScope::per_cluster) {
            throw ContractError("per_cluster scope requires --assignments");
        }
        kl = method == PruneMethod::simple ? prune_simple(s, a.fraction, scope) : prune_hard(s, a.fraction, scope);
    } else {
        throw ContractError("prune --method must be simple, hard or random");
    }
    write_keeplist(kl, out);

    std::cout << "prune: method=" << to_string(kl.method) << " scope=" << to_string(kl.scope)
              << " fraction=" << a.fraction << " kept=" << kl.size() << "/" << n;
    if (!a.labels.empty()) {
        const auto y = read_labels(a.labels);
        std::cout << " balance=" << fixed(balance(histogram(y)), 3) << "->" << fixed(balance(histogram(y, kl)), 3);
    }
    std::cout << '\n';
}

struct BalanceArgs {
    std::string labels;
    std::string keep;
};

void cmd_balance(const BalanceArgs& a) {
    const auto y = read_labels(a.labels);
    std::optional<KeepList> kl;
    if (!a.keep.empty()) kl = read_keeplist(a.keep);
    std::cout << fixed(balance(histogram(y, kl)), 3) << '\n';
}

struct TrainArgs {
    std::string emb, labels, keep, test_emb, test_labels;
    std::vector<std::size_t> grid;
    std::size_t repeats = 20;
    ProbeConfig probe;
};

void cmd_train(const TrainArgs& a, const Globals& g) {
    const fs::path out = require_out(g, "train");
    ensure_dir(out.parent_path());
    const auto x = read_embeddings(a.emb);
    const auto y = read_labels(a.labels);
    const auto tx = read_embeddings(a.test_emb);
    const auto ty = read_labels(a.test_labels);
    const auto kl = a.keep.empty() ? KeepList::identity(x.n_samples()) : read_keeplist(a.keep);
    auto grid = a.grid.empty() ? std::vector<std::size_t>{kl.size()} : a.grid;
    auto cfg = a.probe;
    cfg.seed = g.seed;
    const auto curve = learning_curve(x, y, kl, tx, ty, grid, a.repeats, cfg, g.threads);
    write_learning_curve(curve, out);
    for (const auto& r : curve.rows)
        std::cout << "N=" << r.n << " loss=" << fixed(r.mean_loss, 4) << "+-" << fixed(r.std_loss, 4)
                  << " acc=" << fixed(r.mean_acc, 4) << "+-" << fixed(r.std_acc, 4) << '\n';
}

struct ScaleFitArgs {
    std::vector<std::string> curves;
    std::string window;
};

void cmd_scale_fit(const ScaleFitArgs& a, const Globals& g) {
    std::optional<FitWindow> window;
    if (!a.window.empty()) window = FitWindow::parse(a.window);
    std::map<std::string, PowerLawFit> fits;
    for (const auto& spec : a.curves) {
        // NAME=PATH, or PATH whose stem (or parent directory for curve.csv) names the strategy.
        std::string name, path = spec;
        if (auto eq = spec.find('='); eq != std::string::npos) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        } else {
            const fs::path p(spec);
            name = p.stem() == "curve" && p.has_parent_path() ? p.parent_path().filename().string() : p.stem().string();
        }
        const auto curve = read_learning_curve(path);
        std::vector<CurvePoint> pts;
        for (const auto& r : curve.rows) pts.push_back({static_cast<double>(r.n), r.mean_loss});
        if (!fits.emplace(name, fit_power_law(pts, window)).second) throw ContractError("duplicate strategy " + name);
    }
    const auto ranked = compare_fits(fits);
    if (!g.out.empty()) {
        ensure_dir(fs::path(g.out).parent_path());
        write_fit_summary(ranked, g.out);
    }
    std::cout << format_fit_table(ranked);
}

struct RunArgs {
    std::string manifest;
};

void cmd_run(const RunArgs& a, Globals g, bool seed_given, bool threads_given) {
    auto manifest = RunManifest::load(a.manifest);
    if (seed_given) manifest.seed = g.seed;
    if (threads_given) manifest.threads = g.threads;
    const fs::path out = require_out(g, "run");
    const auto report = run_experiment(manifest, out);

    std::cout << "balance (unpruned " << fixed(report.balance_unpruned, 3) << ")\n";
    for (const auto& s : report.strategies)
        std::cout << "  " << s.name << ": kept " << s.keep.size() << ", balance " << fixed(s.balance, 3) << '\n';
    std::cout << "\nscaling exponents (OLS standard errors)\n" << format_fit_table(report.ranking);
    std::cout << "\nreference ordering from the KWS experiments: simple pruning scales best, then random, "
                 "hard lowest\nobserved ordering:";
    for (const auto& r : report.ranking) std::cout << ' ' << r.strategy;
    std::cout << "\n\nstage seconds:";
    for (const auto& [stage, secs] : report.stage_seconds) std::cout << ' ' << stage << '=' << fixed(secs, 2);
    std::cout << "\nreport: " << (out / "report.json").string() << '\n';
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kprune: k-means based dataset pruning and scaling-exponent analysis"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Global random seed");
    auto* threads_opt = app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)");
    app.add_option("--out", g.out, "Output path or directory");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled Gaussian mixture (writes OUT.emb/.lbl)");
    synth_cmd->add_option("--classes", synth.spec.n_classes, "Number of classes")->default_val(10);
    synth_cmd->add_option("--dims", synth.spec.n_dims, "Embedding dimension")->default_val(64);
    synth_cmd->add_option("--per-class", synth.spec.per_class, "Samples per class")->default_val(100);
    synth_cmd->add_option("--test-per-class", synth.spec.test_per_class, "Held-out samples per class (OUT.test.*)");
    synth_cmd->add_option("--radius", synth.spec.radius, "Radius of the sphere holding the class means")->default_val(1.0);
    synth_cmd->add_option("--sigma", synth.spec.sigma, "Within-class noise standard deviation")->default_val(0.1);

    PcaArgs pca;
    auto* pca_cmd = app.add_subcommand("pca", "Fit PCA and project embeddings");
    pca_cmd->add_option("--emb", pca.emb, "EMB1 embeddings")->required();
    auto* comp_opt = pca_cmd->add_option("--components", pca.components, "Number of components to keep");
    pca_cmd->add_option("--variance", pca.variance, "Keep the fewest components reaching this variance fraction")
        ->excludes(comp_opt);

    ClusterArgs cluster;
    auto* cluster_cmd = app.add_subcommand("cluster", "k-means clustering; writes centroids, assignments, scores");
    cluster_cmd->add_option("--emb", cluster.emb, "EMB1 embeddings")->required();
    cluster_cmd->add_option("--k", cluster.cfg.k, "Number of clusters")->required();
    cluster_cmd->add_option("--max-iter", cluster.cfg.max_iter, "Lloyd iteration cap")->default_val(300);
    cluster_cmd->add_option("--tol", cluster.cfg.tol, "Relative centroid-shift tolerance")->default_val(1e-6);
    cluster_cmd->add_option("--n-init", cluster.cfg.n_init, "Restarts; best inertia wins")->default_val(10);
    cluster_cmd->add_option("--sweep", cluster.sweep, "Also report inertia for these k values")->delimiter(',');

    PruneArgs prune;
    auto* prune_cmd = app.add_subcommand("prune", "Build a keep-list from distance scores");
    prune_cmd->add_option("--scores", prune.scores, "EMB1 N x 1 distance scores")->required();
    prune_cmd->add_option("--assignments", prune.assignments, "LBL1 cluster assignments (per_cluster scope)");
    prune_cmd->add_option("--labels", prune.labels, "LBL1 class labels for the balance summary");
    prune_cmd->add_option("--method", prune.method, "simple | hard | random")
        ->check(CLI::IsMember({"simple", "hard", "random"}));
    prune_cmd->add_option("--fraction", prune.fraction, "Fraction of samples removed, in [0,1)")->required();
    prune_cmd->add_option("--scope", prune.scope, "global | per_cluster")
        ->check(CLI::IsMember({"global", "per_cluster"}));

    BalanceArgs bal;
    auto* balance_cmd = app.add_subcommand("balance", "Print the normalized-entropy class balance");
    balance_cmd->add_option("--labels", bal.labels, "LBL1 class labels")->required();
    balance_cmd->add_option("--keep", bal.keep, "Keep-list to apply first");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Linear-probe learning curve over repeated subsamples");
    train_cmd->add_option("--emb", train.emb, "Training embeddings")->required();
    train_cmd->add_option("--labels", train.labels, "Training labels")->required();
    train_cmd->add_option("--keep", train.keep, "Keep-list over the training set");
    train_cmd->add_option("--test-emb", train.test_emb, "Test embeddings")->required();
    train_cmd->add_option("--test-labels", train.test_labels, "Test labels")->required();
    train_cmd->add_option("--grid", train.grid, "Training-set sizes N (default: the whole keep-list)")->delimiter(',');
    train_cmd->add_option("--repeats", train.repeats, "Subsamples per N")->default_val(20);
    train_cmd->add_option("--epochs", train.probe.epochs)->default_val(100);
    train_cmd->add_option("--batch-size", train.probe.batch_size)->default_val(128);
    train_cmd->add_option("--learning-rate", train.probe.learning_rate)->default_val(0.1);
    train_cmd->add_option("--l2", train.probe.l2_penalty)->default_val(1e-4);

    ScaleFitArgs scale;
    auto* scale_cmd = app.add_subcommand("scale-fit", "Fit loss ~ N^-nu to learning-curve CSVs");
    scale_cmd->add_option("curves", scale.curves, "Curve CSVs, optionally NAME=PATH")->required();
    scale_cmd->add_option("--window", scale.window, "Inclusive N_MIN:N_MAX fit window");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Execute a full experiment manifest");
    run_cmd->add_option("manifest,--manifest", run.manifest, "Manifest JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "kprune: error[usage]: " << one_line(e.what()) << '\n' << app.help();
        return 2;
    }

    try {
        if (*synth_cmd) cmd_synth(synth, g);
        else if (*pca_cmd) cmd_pca(pca, g);
        else if (*cluster_cmd) cmd_cluster(cluster, g);
        else if (*prune_cmd) cmd_prune(prune, g);
        else if (*balance_cmd) cmd_balance(bal);
        else if (*train_cmd) cmd_train(train, g);
        else if (*scale_cmd) cmd_scale_fit(scale, g);
        else if (*run_cmd) cmd_run(run, g, seed_opt->count() > 0, threads_opt->count() > 0);
    } catch (const Error& e) {
        std::cerr << "kprune: error[" << e.tag() << "]: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "kprune: error[internal]: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
