#include "kprune/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "kprune/parallel.hpp"
#include "kprune/random.hpp"

namespace kprune {

void KMeansConfig::validate() const {
    if (k < 1) throw ContractError("k must be at least 1");
    if (max_iter < 1) throw ContractError("max_iter must be at least 1");
    if (!(tol > 0.0)) throw ContractError("tol must be positive");
    if (n_init < 1) throw ContractError("n_init must be at least 1");
}

namespace {

std::vector<double> row_norms(const EmbeddingMatrix& x) {
    std::vector<double> out(x.n_samples());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (float v : x.row(i)) s += double{v} * v;
        out[i] = s;
    }
    return out;
}

std::vector<double> row_norms(const Matrix& c) {
    std::vector<double> out(c.rows);
    for (std::size_t i = 0; i < c.rows; ++i) {
        double s = 0.0;
        for (double v : c.row(i)) s += v * v;
        out[i] = s;
    }
    return out;
}

double squared_distance(std::span<const float> x, double x_norm, std::span<const double> c, double c_norm) {
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += x[j] * c[j];
    return std::max(0.0, x_norm + c_norm - 2.0 * dot);
}

// Squared distances and nearest-centroid ids for every row; writes into
// `clusters` / `sq`. Pure per row, so the split across threads is free.
void assign_squared(const Matrix& centroids, const EmbeddingMatrix& x, const std::vector<double>& x_norms,
                    unsigned threads, std::vector<std::uint32_t>& clusters, std::vector<double>& sq) {
    const std::size_t n = x.n_samples();
    const auto c_norms = row_norms(centroids);
    clusters.resize(n);
    sq.resize(n);
    const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
    parallel_for(blocks, threads, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * kReductionBlock);
        for (std::size_t i = b * kReductionBlock; i < end; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_c = 0;
            for (std::size_t c = 0; c < centroids.rows; ++c) {
                const double d2 = squared_distance(x.row(i), x_norms[i], centroids.row(c), c_norms[c]);
                if (d2 < best) {
                    best = d2;
                    best_c = static_cast<std::uint32_t>(c);
                }
            }
            clusters[i] = best_c;
            sq[i] = best;
        }
    });
}

std::size_t count_distinct_rows(const EmbeddingMatrix& x, std::size_t enough) {
    std::vector<std::size_t> order(x.n_samples());
    std::iota(order.begin(), order.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        auto ra = x.row(a), rb = x.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(order.begin(), order.end(), less);
    std::size_t distinct = order.empty() ? 0 : 1;
    for (std::size_t i = 1; i < order.size() && distinct < enough; ++i)
        if (less(order[i - 1], order[i])) ++distinct;
    return distinct;
}

struct LloydState {
    Matrix centroids;
    std::vector<std::uint32_t> clusters;
    std::vector<double> sq;
    double inertia = 0.0;
};

class Lloyd {
public:
    Lloyd(const EmbeddingMatrix& x, const KMeansConfig& cfg)
        : x_(x), cfg_(cfg), x_norms_(row_norms(x)) {}

    struct Result {
        LloydState state;
        std::vector<double> history;
        std::size_t iterations = 0;
        bool converged = false;
    };

    Result run(std::uint64_t seed) const {
        Result r;
        const auto picks = kmeanspp_seed(x_, cfg_.k, seed);
        r.state.centroids = Matrix(cfg_.k, x_.n_dims());
        for (std::size_t c = 0; c < cfg_.k; ++c) {
            auto src = x_.row(picks[c]);
            std::copy(src.begin(), src.end(), r.state.centroids.row(c).begin());
        }
        assign_and_repair(r.state);
        r.history.push_back(r.state.inertia);
        for (std::size_t it = 1; it <= cfg_.max_iter; ++it) {
            Matrix updated = means(r.state);
            const double shift = relative_shift(r.state.centroids, updated);
            r.state.centroids = std::move(updated);
            assign_and_repair(r.state);
            r.history.push_back(r.state.inertia);
            r.iterations = it;
            if (shift < cfg_.tol) {
                r.converged = true;
                break;
            }
        }
        return r;
    }

private:
    // Assigns every row, then re-seeds any empty cluster with the row
    // farthest from its current centroid (ties to the lowest row index) and
    // reassigns. Each repair strictly lowers the objective.
    void assign_and_repair(LloydState& s) const {
        const std::size_t n = x_.n_samples();
        for (std::size_t round = 0;; ++round) {
            assign_squared(s.centroids, x_, x_norms_, cfg_.threads, s.clusters, s.sq);
            std::vector<std::size_t> counts(cfg_.k, 0);
            for (auto c : s.clusters) ++counts[c];
            auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
            if (empty == counts.end()) break;
            if (round > n + cfg_.k) throw Error("internal", "k-means empty-cluster repair did not settle");
            std::size_t far = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (s.sq[i] > s.sq[far]) far = i;
            const std::size_t target = static_cast<std::size_t>(empty - counts.begin());
            auto src = x_.row(far);
            std::copy(src.begin(), src.end(), s.centroids.row(target).begin());
        }
        // Block partial sums combined in block order.
        const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
        double total = 0.0;
        for (std::size_t b = 0; b < blocks; ++b) {
            double part = 0.0;
            const std::size_t end = std::min(n, (b + 1) * kReductionBlock);
            for (std::size_t i = b * kReductionBlock; i < end; ++i) part += s.sq[i];
            total += part;
        }
        s.inertia = total;
    }

    Matrix means(const LloydState& s) const {
        const std::size_t n = x_.n_samples(), d = x_.n_dims(), k = cfg_.k;
        const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
        std::vector<Matrix> partial(blocks, Matrix(k, d));
        std::vector<std::vector<std::size_t>> partial_counts(blocks, std::vector<std::size_t>(k, 0));
        parallel_for(blocks, cfg_.threads, [&](std::size_t b) {
            const std::size_t end = std::min(n, (b + 1) * kReductionBlock);
            for (std::size_t i = b * kReductionBlock; i < end; ++i) {
                const auto c = s.clusters[i];
                auto dst = partial[b].row(c);
                auto src = x_.row(i);
                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                ++partial_counts[b][c];
            }
        });
        Matrix sum(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t b = 0; b < blocks; ++b) {
            for (std::size_t e = 0; e < sum.data.size(); ++e) sum.data[e] += partial[b].data[e];
            for (std::size_t c = 0; c < k; ++c) counts[c] += partial_counts[b][c];
        }
        for (std::size_t c = 0; c < k; ++c)
            for (double& v : sum.row(c)) v /= static_cast<double>(counts[c]);
        return sum;
    }

    static double relative_shift(const Matrix& before, const Matrix& after) {
        double diff = 0.0, norm = 0.0;
        for (std::size_t e = 0; e < before.data.size(); ++e) {
            const double dlt = after.data[e] - before.data[e];
            diff += dlt * dlt;
            norm += before.data[e] * before.data[e];
        }
        return std::sqrt(diff) / std::max(1.0, std::sqrt(norm));
    }

    const EmbeddingMatrix& x_;
    const KMeansConfig& cfg_;
    std::vector<double> x_norms_;
};

}  // namespace

Assignment assign(const Matrix& centroids, const EmbeddingMatrix& x, unsigned threads) {
    if (centroids.rows == 0) throw ContractError("assign: no centroids");
    if (centroids.cols != x.n_dims())
        throw ContractError("assign: centroids have " + std::to_string(centroids.cols) + " dims, data has " +
                            std::to_string(x.n_dims()));
    Assignment out;
    assign_squared(centroids, x, row_norms(x), threads, out.clusters, out.distances);
    for (double& d : out.distances) d = std::sqrt(d);
    return out;
}

std::vector<std::size_t> kmeanspp_seed(const EmbeddingMatrix& x, std::size_t k, std::uint64_t seed) {
    const std::size_t n = x.n_samples();
    if (k < 1 || k > n) throw ContractError("k-means++: k=" + std::to_string(k) + " with N=" + std::to_string(n));
    Rng rng(seed);
    const auto norms = row_norms(x);
    std::vector<std::size_t> picks{static_cast<std::size_t>(rng.below(n))};
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::vector<double> c(x.n_dims());
    while (picks.size() < k) {
        auto src = x.row(picks.back());
        std::copy(src.begin(), src.end(), c.begin());
        const double c_norm = norms[picks.back()];
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(x.row(i), norms[i], c, c_norm));
            total += nearest[i];
        }
        std::size_t chosen = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (nearest[i] <= 0.0) continue;
                acc += nearest[i];
                chosen = i;
                if (acc > target) break;
            }
        } else {
            // Every row coincides with a chosen centroid.
            chosen = static_cast<std::size_t>(rng.below(n));
        }
        picks.push_back(chosen);
    }
    return picks;
}

KMeansModel kmeans_fit(const EmbeddingMatrix& x, const KMeansConfig& cfg) {
    cfg.validate();
    if (cfg.k > x.n_samples())
        throw ContractError("k=" + std::to_string(cfg.k) + " exceeds N=" + std::to_string(x.n_samples()));
    if (count_distinct_rows(x, cfg.k) < cfg.k)
        throw DegenerateInputError("fewer than k=" + std::to_string(cfg.k) + " distinct rows");

    Lloyd lloyd(x, cfg);
    KMeansModel best;
    bool have = false;
    for (std::size_t j = 0; j < cfg.n_init; ++j) {
        auto r = lloyd.run(cfg.seed ^ static_cast<std::uint64_t>(j));
        if (have && !(r.state.inertia < best.inertia)) continue;
        have = true;
        best.centroids = std::move(r.state.centroids);
        best.assignments = std::move(r.state.clusters);
        best.distances = std::move(r.state.sq);
        best.inertia = r.state.inertia;
        best.iterations_run = r.iterations;
        best.converged = r.converged;
        best.best_init = j;
        best.inertia_history = std::move(r.history);
    }
    for (double& d : best.distances) d = std::sqrt(d);
    best.config = cfg;
    return best;
}

std::vector<SweepRow> sweep_k(const EmbeddingMatrix& x, const std::vector<std::size_t>& ks, KMeansConfig cfg) {
    std::vector<SweepRow> rows;
    rows.reserve(ks.size());
    for (auto k : ks) {
        cfg.k = k;
        rows.push_back({k, kmeans_fit(x, cfg).inertia});
    }
    return rows;
}

void save_kmeans(const KMeansModel& model, const std::filesystem::path& prefix) {
    const auto base = prefix.string();
    write_embeddings(EmbeddingMatrix::from_matrix(model.centroids), base + ".centroids.emb");
    write_labels(LabelVector(model.assignments, static_cast<std::uint32_t>(model.k())), base + ".assignments.lbl");
    nlohmann::ordered_json meta;
    meta["k"] = model.config.k;
    meta["max_iter"] = model.config.max_iter;
    meta["tol"] = model.config.tol;
    meta["n_init"] = model.config.n_init;
    meta["seed"] = model.config.seed;
    meta["inertia"] = model.inertia;
    meta["iterations_run"] = model.iterations_run;
    meta["converged"] = model.converged;
    meta["best_init"] = model.best_init;
    std::ofstream out(base + ".json", std::ios::trunc);
    if (!out) throw IoError("cannot open " + base + ".json for writing");
    out << meta.dump(2) << '\n';
}

}  // namespace kprune
