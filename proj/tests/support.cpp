#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace testsupport {

using namespace mclet;

kg::KnowledgeGraph toy_graph(bool holdout) {
    std::vector<kg::RawTriple> triples = {
        {"e0", "r0", "e1"}, {"e1", "r1", "e2"}, {"e2", "r0", "e3"},
        {"e3", "r1", "e4"}, {"e4", "r0", "e5"}, {"e5", "r1", "e0"},
    };
    using kg::Split;
    std::vector<kg::RawAssertion> assertions = {
        {"e0", "/A/t0", Split::train}, {"e1", "/A/t1", Split::train}, {"e2", "/A/t0", Split::train},
        {"e2", "/A/t1", holdout ? Split::valid : Split::train},      {"e3", "/B/t2", Split::train},
        {"e4", "/B/t3", Split::train}, {"e5", "/B/t2", Split::train},
        {"e5", "/B/t3", holdout ? Split::test : Split::train},
    };
    return kg::build_knowledge_graph(triples, assertions, kg::extract_clusters_freebase);
}

TrainConfig toy_config(predictor::Pooling pooling) {
    TrainConfig c;
    c.dim = 4;
    c.layers = 2;
    c.heads = 2;
    c.experts = 2;
    c.lambda = 0.5;
    c.gamma = 0.01;
    c.tau = 0.6;
    c.batch_size = 6;
    c.pooling = pooling;
    return c;
}

kg::ViewGraph random_view(std::mt19937_64& rng, int max_nodes) {
    std::uniform_int_distribution<int> size(1, max_nodes - 1);
    const int left = size(rng);
    const int right = std::max(1, std::uniform_int_distribution<int>(1, max_nodes - left)(rng));
    std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0.05, 0.6)(rng));
    std::vector<std::pair<int, int>> edges;
    for (int l = 0; l < left; ++l) {
        for (int r = 0; r < right; ++r) {
            if (coin(rng)) edges.emplace_back(l, r);
        }
    }
    return kg::make_view(kg::ViewKind::e2t, left, right, edges);
}

Matrix dense_normalized(const kg::ViewGraph& view) {
    Matrix a = Matrix::Zero(view.left_count, view.right_count);
    for (const auto& [l, r] : view.edges) a(l, r) = 1.0;
    const Vector dl = a.rowwise().sum();
    const Vector dr = a.colwise().sum().transpose();
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (a(i, j) != 0.0) out(i, j) = 1.0 / std::sqrt(dl(i) * dr(j));
        }
    }
    return out;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double eps) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double keep = x(i, j);
            x(i, j) = keep + eps;
            const double up = f();
            x(i, j) = keep - eps;
            const double down = f();
            x(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * eps);
        }
    }
    return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
    // Below the floor both sides are finite-difference noise.
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
    return (analytic - numeric).norm() / scale;
}

GradReport check_model_gradients(const model::TypingModel& model, model::ModelParameters& params,
                                 std::span<const int> batch) {
    auto loss = [&] {
        ag::Tape tape;
        std::mt19937_64 rng(7);
        return model.batch_loss(tape, params, batch, rng).total.scalar();
    };
    ag::Tape tape;
    std::mt19937_64 rng(7);
    auto terms = model.batch_loss(tape, params, batch, rng);
    tape.backward(terms.total);
    std::vector<Matrix> analytic;
    for (const auto& leaf : terms.leaves) {
        const Matrix& g = tape.grad(leaf);
        analytic.push_back(g.size() == 0 ? Matrix::Zero(leaf.rows(), leaf.cols()) : g);
    }
    GradReport report;
    auto tables = params.tables();
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const Matrix numeric = numeric_gradient(*tables[i].table, loss);
        const double err = relative_error(analytic[i], numeric);
        if (err >= report.worst) {
            report.worst = err;
            report.table = tables[i].name;
        }
    }
    return report;
}

long sort_and_scan_rank(const Vector& scores, int target, const std::vector<int>& known_true) {
    std::vector<int> candidates;
    for (int j = 0; j < scores.size(); ++j) {
        if (std::find(known_true.begin(), known_true.end(), j) == known_true.end()) candidates.push_back(j);
    }
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        if (a == target || b == target) return b == target;
        return a < b;
    });
    const auto it = std::find(candidates.begin(), candidates.end(), target);
    return static_cast<long>(it - candidates.begin()) + 1;
}

} // namespace testsupport
