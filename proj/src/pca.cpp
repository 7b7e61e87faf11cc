#include "kprune/pca.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "kprune/parallel.hpp"

namespace kprune {

namespace {

constexpr int kMaxSweeps = 64;
constexpr double kOffDiagonalTolerance = 1e-10;
constexpr double kEigenClamp = 1e-12;

double frobenius(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

double max_off_diagonal(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j) m = std::max(m, std::abs(a(i, j)));
    return m;
}

void fix_sign(std::span<double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    if (v[best] < 0.0)
        for (double& x : v) x = -x;
}

}  // namespace

std::vector<double> PcaModel::explained_variance_ratio() const {
    std::vector<double> r(eigenvalues.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = eigenvalues[i] / total_variance;
    return r;
}

SymmetricEigen jacobi_eigen(Matrix a) {
    const std::size_t n = a.rows;
    if (n == 0 || a.cols != n) throw ContractError("jacobi_eigen needs a non-empty square matrix");
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    const double threshold = kOffDiagonalTolerance * frobenius(a);
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        if (max_off_diagonal(a) <= threshold) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= threshold) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k != p && k != q) {
                        const double akp = a(k, p), akq = a(k, q);
                        a(k, p) = a(p, k) = c * akp - s * akq;
                        a(k, q) = a(q, k) = s * akp + c * akq;
                    }
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.sweeps = sweep;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        out.values[r] = a(order[r], order[r]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = v(k, order[r]);
    }
    return out;
}

Matrix sample_covariance(const EmbeddingMatrix& x, std::vector<double>& mean, unsigned threads) {
    const std::size_t n = x.n_samples(), d = x.n_dims();
    if (n < 2) throw ContractError("covariance needs at least two samples");
    mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    // Each task owns one covariance row and sums over samples in index
    // order, so the result is identical for any thread count.
    Matrix cov(d, d);
    parallel_for(d, threads, [&](std::size_t a) {
        auto out = cov.row(a);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = x.row(i);
            const double ca = r[a] - mean[a];
            if (ca == 0.0) continue;
            for (std::size_t b = a; b < d; ++b) out[b] += ca * (r[b] - mean[b]);
        }
        for (std::size_t b = a; b < d; ++b) out[b] /= static_cast<double>(n - 1);
    });
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < a; ++b) cov(a, b) = cov(b, a);
    return cov;
}

PcaModel fit_pca(const EmbeddingMatrix& x, std::size_t m, unsigned threads) {
    const std::size_t n = x.n_samples(), d = x.n_dims();
    if (n < 2) throw ContractError("PCA needs at least two samples");
    const std::size_t max_m = std::min(n - 1, d);
    if (m < 1 || m > max_m)
        throw ContractError("PCA component count " + std::to_string(m) + " outside [1, " + std::to_string(max_m) + "]");

    PcaModel model;
    model.n_samples = n;
    Matrix cov = sample_covariance(x, model.mean, threads);
    for (std::size_t j = 0; j < d; ++j) model.total_variance += cov(j, j);
    if (model.total_variance <= 0.0) throw DegenerateInputError("all rows identical: zero total variance");

    auto eig = jacobi_eigen(std::move(cov));
    model.components = Matrix(m, d);
    model.eigenvalues.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
        double lambda = eig.values[r];
        if (lambda < kEigenClamp * model.total_variance) lambda = 0.0;
        model.eigenvalues[r] = lambda;
        auto dst = model.components.row(r);
        auto src = eig.vectors.row(r);
        std::copy(src.begin(), src.end(), dst.begin());
        fix_sign(dst);
    }
    return model;
}

EmbeddingMatrix transform(const PcaModel& model, const EmbeddingMatrix& x) {
    const std::size_t d = model.n_dims(), m = model.n_components();
    if (x.n_dims() != d)
        throw ContractError("transform: input has " + std::to_string(x.n_dims()) + " dims, model expects " +
                            std::to_string(d));
    std::vector<float> out(x.n_samples() * m);
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < x.n_samples(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < d; ++j) centered[j] = r[j] - model.mean[j];
        for (std::size_t c = 0; c < m; ++c) {
            auto comp = model.components.row(c);
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += comp[j] * centered[j];
            out[i * m + c] = static_cast<float>(s);
        }
    }
    return {x.n_samples(), m, std::move(out)};
}

std::size_t components_for_variance(const PcaModel& model, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw DomainError("variance threshold must lie in (0, 1], got " + std::to_string(threshold));
    const std::size_t full = std::min(model.n_samples - 1, model.n_dims());
    if (model.n_samples < 2 || model.n_components() != full)
        throw ContractError("components_for_variance needs a model fitted with all " + std::to_string(full) +
                            " components");
    double cumulative = 0.0;
    for (std::size_t i = 0; i < model.n_components(); ++i) {
        cumulative += model.eigenvalues[i] / model.total_variance;
        if (cumulative >= threshold - 1e-12) return i + 1;
    }
    return model.n_components();
}

void save_pca(const PcaModel& model, const std::filesystem::path& prefix) {
    Matrix mean(1, model.n_dims());
    std::copy(model.mean.begin(), model.mean.end(), mean.data.begin());
    auto base = prefix.string();
    write_embeddings(EmbeddingMatrix::from_matrix(mean), base + ".mean.emb");
    write_embeddings(EmbeddingMatrix::from_matrix(model.components), base + ".components.emb");
    nlohmann::ordered_json meta;
    meta["n_samples"] = model.n_samples;
    meta["total_variance"] = model.total_variance;
    meta["eigenvalues"] = model.eigenvalues;
    meta["explained_variance_ratio"] = model.explained_variance_ratio();
    std::ofstream out(base + ".json", std::ios::trunc);
    if (!out) throw IoError("cannot open " + base + ".json for writing");
    out << meta.dump(2) << '\n';
}

PcaModel load_pca(const std::filesystem::path& prefix) {
    auto base = prefix.string();
    PcaModel model;
    const auto mean = read_embeddings(base + ".mean.emb");
    if (mean.n_samples() != 1) throw FormatError("PCA mean file must hold a single row");
    model.mean.assign(mean.values().begin(), mean.values().end());
    model.components = read_embeddings(base + ".components.emb").to_matrix();
    if (model.components.cols != model.mean.size()) throw FormatError("PCA components/mean dimension mismatch");
    std::ifstream in(base + ".json");
    if (!in) throw IoError("cannot open " + base + ".json");
    try {
        const auto meta = nlohmann::json::parse(in);
        model.n_samples = meta.at("n_samples").get<std::size_t>();
        model.total_variance = meta.at("total_variance").get<double>();
        model.eigenvalues = meta.at("eigenvalues").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("PCA metadata " + base + ".json: " + e.what());
    }
    if (model.eigenvalues.size() != model.components.rows)
        throw FormatError("PCA eigenvalue count does not match component rows");
    return model;
}

}  // namespace kprune
