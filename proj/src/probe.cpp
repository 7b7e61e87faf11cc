#include "kprune/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "csv.hpp"
#include "kprune/metrics.hpp"
#include "kprune/parallel.hpp"
#include "kprune/pruner.hpp"
#include "kprune/random.hpp"

namespace kprune {

void ProbeConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw ContractError("probe epochs and batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ContractError("probe learning_rate must be positive");
    if (!(l2_penalty > 0.0)) throw ContractError("probe l2_penalty must be positive");
}

namespace {

void check_dims(const ProbeModel& model, const EmbeddingMatrix& x) {
    if (x.n_dims() != model.n_dims())
        throw ContractError("probe expects " + std::to_string(model.n_dims()) + " dims, input has " +
                            std::to_string(x.n_dims()));
}

// Softmax of W x_i + b into `p`; returns log p[label] without clamping.
void softmax_row(const ProbeModel& m, std::span<const float> x, std::vector<double>& p) {
    const std::size_t c = m.n_classes();
    for (std::size_t k = 0; k < c; ++k) {
        auto w = m.weights.row(k);
        double z = m.bias[k];
        for (std::size_t j = 0; j < x.size(); ++j) z += w[j] * x[j];
        p[k] = z;
    }
    const double top = *std::max_element(p.begin(), p.begin() + c);
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += (p[k] = std::exp(p[k] - top));
    for (std::size_t k = 0; k < c; ++k) p[k] /= s;
}

// Accumulates the mean cross-entropy gradient over `rows` (no penalty term).
double accumulate_gradient(const ProbeModel& m, const EmbeddingMatrix& x, const LabelVector& y,
                           std::span<const std::size_t> rows, Matrix& gw, std::vector<double>& gb) {
    const std::size_t c = m.n_classes(), d = m.n_dims();
    std::fill(gw.data.begin(), gw.data.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    std::vector<double> p(c);
    double loss = 0.0;
    for (auto i : rows) {
        auto xi = x.row(i);
        softmax_row(m, xi, p);
        loss -= std::log(std::max(p[y[i]], 1e-300));
        p[y[i]] -= 1.0;
        for (std::size_t k = 0; k < c; ++k) {
            auto g = gw.row(k);
            for (std::size_t j = 0; j < d; ++j) g[j] += p[k] * xi[j];
            gb[k] += p[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& g : gw.data) g *= inv;
    for (double& g : gb) g *= inv;
    return loss * inv;
}

}  // namespace

ProbeObjective probe_objective(const ProbeModel& model, const EmbeddingMatrix& x, const LabelVector& y,
                               double l2_penalty) {
    check_dims(model, x);
    if (y.n_samples() != x.n_samples()) throw ContractError("probe: label count does not match rows");
    ProbeObjective out;
    out.grad_weights = Matrix(model.n_classes(), model.n_dims());
    out.grad_bias.assign(model.n_classes(), 0.0);
    std::vector<std::size_t> rows(x.n_samples());
    std::iota(rows.begin(), rows.end(), 0);
    out.loss = accumulate_gradient(model, x, y, rows, out.grad_weights, out.grad_bias);
    double sq = 0.0;
    for (std::size_t e = 0; e < model.weights.data.size(); ++e) {
        sq += model.weights.data[e] * model.weights.data[e];
        out.grad_weights.data[e] += l2_penalty * model.weights.data[e];
    }
    out.loss += 0.5 * l2_penalty * sq;
    return out;
}

ProbeModel train_probe(const EmbeddingMatrix& x, const LabelVector& y, const ProbeConfig& cfg,
                       std::vector<double>* epoch_losses) {
    cfg.validate();
    const std::size_t n = x.n_samples(), d = x.n_dims(), c = y.n_classes();
    if (y.n_samples() != n) throw ContractError("probe: label count does not match rows");
    if (c < 2) throw ContractError("probe needs at least two classes");
    if (n < c) throw ContractError("probe needs N >= number of classes (N=" + std::to_string(n) + ", c=" +
                                   std::to_string(c) + ")");

    Rng rng(cfg.seed);
    ProbeModel m{Matrix(c, d), std::vector<double>(c, 0.0)};
    for (double& w : m.weights.data) w = rng.uniform(-0.01, 0.01);

    Matrix gw(c, d);
    std::vector<double> gb(c);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (epoch_losses) epoch_losses->clear();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            accumulate_gradient(m, x, y, std::span(order).subspan(start, len), gw, gb);
            const double decay = 1.0 - cfg.learning_rate * cfg.l2_penalty;
            for (std::size_t e = 0; e < gw.data.size(); ++e)
                m.weights.data[e] = decay * m.weights.data[e] - cfg.learning_rate * gw.data[e];
            for (std::size_t k = 0; k < c; ++k) m.bias[k] -= cfg.learning_rate * gb[k];
        }
        if (epoch_losses) epoch_losses->push_back(probe_objective(m, x, y, cfg.l2_penalty).loss);
    }
    return m;
}

Matrix predict_probs(const ProbeModel& model, const EmbeddingMatrix& x) {
    check_dims(model, x);
    Matrix out(x.n_samples(), model.n_classes());
    std::vector<double> p(model.n_classes());
    for (std::size_t i = 0; i < x.n_samples(); ++i) {
        softmax_row(model, x.row(i), p);
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    return out;
}

void LearningCurve::validate() const {
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (r > 0 && rows[r].n <= rows[r - 1].n) throw FormatError("learning curve N values not strictly increasing");
        if (rows[r].std_loss < 0.0 || rows[r].std_acc < 0.0) throw FormatError("negative standard deviation");
        if (rows[r].repeats < 1) throw FormatError("learning curve row with zero repeats");
    }
}

LearningCurve learning_curve(const EmbeddingMatrix& x, const LabelVector& y, const KeepList& kl,
                             const EmbeddingMatrix& test_x, const LabelVector& test_y,
                             const std::vector<std::size_t>& n_grid, std::size_t repeats, const ProbeConfig& cfg,
                             unsigned threads) {
    cfg.validate();
    if (repeats < 1) throw ContractError("learning curve needs at least one repeat");
    if (kl.source_n != x.n_samples() || y.n_samples() != x.n_samples())
        throw ContractError("learning curve: keep-list, embeddings and labels disagree on N");
    if (test_x.n_samples() != test_y.n_samples()) throw ContractError("test embeddings and labels disagree on N");
    if (test_y.n_classes() != y.n_classes()) throw ContractError("test labels declare a different class count");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] > kl.size())
            throw ContractError("N-grid entry " + std::to_string(n_grid[i]) + " exceeds keep-list size " +
                                std::to_string(kl.size()));
        if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ContractError("N-grid must be strictly increasing");
    }

    struct Cell {
        double loss, acc;
    };
    std::vector<Cell> cells(n_grid.size() * repeats);
    parallel_for(cells.size(), threads, [&](std::size_t t) {
        const auto i = static_cast<std::uint32_t>(t / repeats);
        const auto j = static_cast<std::uint32_t>(t % repeats);
        const std::uint64_t seed = derive_seed(cfg.seed, i, j);
        const auto part = subsample(kl, n_grid[i], seed);
        ProbeConfig local = cfg;
        local.seed = mix64(seed);
        const auto model = train_probe(gather(x, part), gather(y, part), local);
        const auto probs = predict_probs(model, test_x);
        cells[t] = {cross_entropy(probs, test_y), accuracy(probs, test_y)};
    });

    LearningCurve curve;
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        CurveRow row;
        row.n = n_grid[i];
        row.repeats = repeats;
        for (std::size_t j = 0; j < repeats; ++j) {
            row.mean_loss += cells[i * repeats + j].loss;
            row.mean_acc += cells[i * repeats + j].acc;
        }
        row.mean_loss /= static_cast<double>(repeats);
        row.mean_acc /= static_cast<double>(repeats);
        for (std::size_t j = 0; j < repeats; ++j) {
            const auto& cell = cells[i * repeats + j];
            row.std_loss += (cell.loss - row.mean_loss) * (cell.loss - row.mean_loss);
            row.std_acc += (cell.acc - row.mean_acc) * (cell.acc - row.mean_acc);
        }
        row.std_loss = std::sqrt(row.std_loss / static_cast<double>(repeats));
        row.std_acc = std::sqrt(row.std_acc / static_cast<double>(repeats));
        curve.rows.push_back(row);
    }
    return curve;
}

void write_learning_curve(const LearningCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "N,mean_loss,std_loss,mean_acc,std_acc,repeats\n";
    for (const auto& r : curve.rows)
        out << r.n << ',' << csv::num(r.mean_loss) << ',' << csv::num(r.std_loss) << ',' << csv::num(r.mean_acc) << ','
            << csv::num(r.std_acc) << ',' << r.repeats << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

LearningCurve read_learning_curve(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const std::vector<std::string> expected{"N", "mean_loss", "std_loss", "mean_acc", "std_acc", "repeats"};
    if (table.header != expected) throw FormatError(path.string() + ": unexpected learning-curve header");
    LearningCurve curve;
    const auto where = path.string();
    for (const auto& cells : table.rows)
        curve.rows.push_back({csv::parse<std::size_t>(cells[0], where), csv::parse<double>(cells[1], where),
                              csv::parse<double>(cells[2], where), csv::parse<double>(cells[3], where),
                              csv::parse<double>(cells[4], where), csv::parse<std::size_t>(cells[5], where)});
    curve.validate();
    return curve;
}

}  // namespace kprune
