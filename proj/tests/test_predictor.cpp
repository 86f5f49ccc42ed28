#include "doctest.h"

#include "mclet/predictor.hpp"
#include "support.hpp"

#include <cmath>

using namespace mclet;
using namespace mclet::predictor;
using testsupport::random_matrix;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

PredictorParams random_params(std::mt19937_64& rng, int relations, int types, int width, int heads, int experts,
                              Pooling kind) {
    PredictorParams p;
    p.relation = random_matrix(rng, relations + 1, width);
    p.w = random_matrix(rng, types, width);
    p.b = random_matrix(rng, types, 1);
    if (kind == Pooling::mham) {
        p.expert_w = random_matrix(rng, experts, width);
        p.expert_b = random_matrix(rng, experts, 1);
        p.head_w = random_matrix(rng, heads, experts);
    } else {
        p.head_w = random_matrix(rng, heads, width);
    }
    p.head_b = random_matrix(rng, heads, 1);
    p.temperature_raw = random_matrix(rng, heads, 1);
    return p;
}

NeighborMatrix random_nm(std::mt19937_64& rng, int n, int types, int width, const PredictorParams& p) {
    NeighborMatrix nm;
    nm.features = random_matrix(rng, n, width);
    nm.logits = nm.features * p.w.transpose();
    nm.logits.rowwise() += p.b.col(0).transpose();
    return nm;
}

// Step-by-step scalar evaluation of the expert-gated head mixture.
Vector scalar_mham(const NeighborMatrix& nm, const PredictorParams& p, bool use_experts) {
    const int n = static_cast<int>(nm.features.rows());
    const int types = static_cast<int>(nm.logits.cols());
    const int width = static_cast<int>(nm.features.cols());
    const int heads = static_cast<int>(p.head_w.rows());
    std::vector<std::vector<double>> head_in(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (use_experts) {
            const int m = static_cast<int>(p.expert_w.rows());
            std::vector<double> g(static_cast<std::size_t>(m));
            double mx = -1e300, z = 0.0;
            for (int k = 0; k < m; ++k) {
                double v = p.expert_b(k, 0);
                for (int j = 0; j < width; ++j) v += p.expert_w(k, j) * nm.features(i, j);
                g[static_cast<std::size_t>(k)] = v;
                mx = std::max(mx, v);
            }
            for (auto& v : g) z += (v = std::exp(v - mx));
            for (auto& v : g) v /= z;
            head_in[static_cast<std::size_t>(i)] = g;
        } else {
            for (int j = 0; j < width; ++j) head_in[static_cast<std::size_t>(i)].push_back(nm.features(i, j));
        }
    }
    std::vector<double> mix(static_cast<std::size_t>(types), 0.0);
    for (int h = 0; h < heads; ++h) {
        std::vector<double> a(static_cast<std::size_t>(n));
        double z = 0.0;
        for (int i = 0; i < n; ++i) {
            double v = p.head_b(h, 0);
            const auto& in = head_in[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < in.size(); ++k) v += p.head_w(h, static_cast<Eigen::Index>(k)) * in[k];
            a[static_cast<std::size_t>(i)] = std::exp(v);
            z += a[static_cast<std::size_t>(i)];
        }
        std::vector<double> s(static_cast<std::size_t>(types), 0.0);
        for (int t = 0; t < types; ++t) {
            for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(t)] += a[static_cast<std::size_t>(i)] / z * nm.logits(i, t);
        }
        const double temp = std::log1p(std::exp(p.temperature_raw(h, 0)));
        double zt = 0.0;
        for (int t = 0; t < types; ++t) zt += std::exp(temp * s[static_cast<std::size_t>(t)]);
        for (int t = 0; t < types; ++t) {
            mix[static_cast<std::size_t>(t)] += std::exp(temp * s[static_cast<std::size_t>(t)]) / zt * s[static_cast<std::size_t>(t)];
        }
    }
    Vector out(types);
    for (int t = 0; t < types; ++t) out(t) = sig(mix[static_cast<std::size_t>(t)]);
    return out;
}

} // namespace

TEST_CASE("concat_final orders streams") {
    Matrix a(1, 2), b(1, 2), c(1, 2), d(1, 2);
    a << 1, 2;
    b << 3, 4;
    c << 5, 6;
    d << 7, 8;
    const auto f = concat_final(a, b, c, d);
    CHECK(f.entity == (Matrix(1, 4) << 1, 2, 3, 4).finished());
    CHECK(f.type == (Matrix(1, 4) << 5, 6, 7, 8).finished());
    CHECK_THROWS_AS(concat_final(Matrix(2, 2), b, c, d), std::invalid_argument);
}

TEST_CASE("neighbor_logits") {
    std::mt19937_64 rng(41);
    const Matrix w = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 1);
    const Vector z = random_matrix(rng, 4, 1).col(0), r = random_matrix(rng, 4, 1).col(0);
    CHECK(neighbor_logits(z, z, w, b) == b.col(0));
    CHECK(neighbor_logits(z, r, Matrix::Zero(3, 4), b) == b.col(0));
    const Vector out = neighbor_logits(z, r, w, b);
    for (int t = 0; t < 3; ++t) {
        double v = b(t, 0);
        for (int j = 0; j < 4; ++j) v += w(t, j) * (z(j) - r(j));
        CHECK(std::abs(out(t) - v) <= 1e-12);
    }
    CHECK_THROWS_AS(neighbor_logits(z, r, random_matrix(rng, 3, 2), b), std::invalid_argument);
}

TEST_CASE("assemble rows follow the neighbor set and honor masking") {
    std::mt19937_64 rng(42);
    FinalEmbeddings emb{random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)};
    const auto p = random_params(rng, 2, 3, 4, 2, 2, Pooling::mham);
    kg::NeighborSet ns;
    ns.entity = 0;
    ns.relational = {{1, 2}};
    ns.types = {0, 2};
    const auto nm = assemble(ns, emb, p);
    REQUIRE(nm);
    CHECK(nm->logits.rows() == 3);
    const Vector r0 = neighbor_logits(emb.entity.row(2).transpose(), p.relation.row(1).transpose(), p.w, p.b);
    const Vector r2 = neighbor_logits(emb.type.row(2).transpose(), p.relation.row(2).transpose(), p.w, p.b);
    CHECK((nm->logits.row(0).transpose() - r0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((nm->logits.row(2).transpose() - r2).cwiseAbs().maxCoeff() <= 1e-12);
    const auto masked = assemble(ns, emb, p, 2);
    CHECK(masked->logits.rows() == 2);
    kg::NeighborSet lonely;
    CHECK_FALSE(assemble(lonely, emb, p).has_value());
}

TEST_CASE("pooling variants match scalar oracles") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        const auto pm = random_params(rng, 2, 4, 6, 2, 2, Pooling::mham);
        const auto nm = random_nm(rng, 3, 4, 6, pm);
        const auto r = pool_mham(nm, pm);
        CHECK((r.p - scalar_mham(nm, pm, true)).cwiseAbs().maxCoeff() <= 1e-10);
        for (Eigen::Index h = 0; h < r.attention.cols(); ++h) {
            CHECK(std::abs(r.attention.col(h).sum() - 1.0) <= 1e-9);
            CHECK(r.attention.col(h).minCoeff() >= 0.0);
        }
        CHECK(r.p.minCoeff() > 0.0);
        CHECK(r.p.maxCoeff() < 1.0);

        const auto pa = random_params(rng, 2, 4, 6, 2, 2, Pooling::mha);
        const auto nma = random_nm(rng, 3, 4, 6, pa);
        CHECK((pool_mha(nma, pa).p - scalar_mham(nma, pa, false)).cwiseAbs().maxCoeff() <= 1e-10);

        const Vector mean = nm.logits.colwise().mean().transpose();
        const Vector avg = pool_avg(nm).p;
        for (int t = 0; t < 4; ++t) CHECK(std::abs(avg(t) - sig(mean(t))) <= 1e-12);
    }
}

TEST_CASE("pooling edge cases") {
    std::mt19937_64 rng(44);
    auto p = random_params(rng, 1, 5, 4, 3, 2, Pooling::mham);
    const auto one = random_nm(rng, 1, 5, 4, p);
    const auto r = pool_mham(one, p);
    CHECK(r.attention.isApprox(Matrix::Ones(1, 3)));
    const Vector l = one.logits.row(0).transpose();
    Vector mix = Vector::Zero(5);
    const Vector temps = p.temperatures();
    for (int h = 0; h < 3; ++h) {
        Eigen::ArrayXd w = (temps(h) * l.array()).exp();
        mix += (w / w.sum() * l.array()).matrix();
    }
    CHECK((r.p - mix.unaryExpr([](double v) { return sig(v); })).cwiseAbs().maxCoeff() <= 1e-12);

    auto pa = random_params(rng, 1, 5, 4, 3, 2, Pooling::mha);
    pa.temperature_raw = p.temperature_raw;
    NeighborMatrix one_a = one;
    CHECK((pool_mha(one_a, pa).p - r.p).cwiseAbs().maxCoeff() <= 1e-12);

    NeighborMatrix twice;
    twice.logits = Matrix(2, 5);
    twice.logits << one.logits, one.logits;
    twice.features = Matrix(2, 4);
    twice.features << one.features, one.features;
    CHECK((pool_avg(twice).p - pool_avg(one).p).cwiseAbs().maxCoeff() <= 1e-15);

    // Temperature limits on a single head.
    auto single = random_params(rng, 1, 5, 4, 1, 2, Pooling::mham);
    const auto nm = random_nm(rng, 2, 5, 4, single);
    single.temperature_raw(0, 0) = -60.0;
    const auto flat = pool_mham(nm, single);
    const Matrix s = nm.logits.transpose() * flat.attention;
    for (int t = 0; t < 5; ++t) CHECK(std::abs(std::log(flat.p(t) / (1 - flat.p(t))) - s(t, 0) / 5.0) <= 1e-9);
    single.temperature_raw(0, 0) = 1e4;
    const auto sharp = pool_mham(nm, single);
    Eigen::Index arg;
    s.col(0).maxCoeff(&arg);
    for (int t = 0; t < 5; ++t) {
        const double logit = std::log(sharp.p(t) / (1 - sharp.p(t)));
        CHECK(std::abs(logit - (t == arg ? s(t, 0) : 0.0)) <= 1e-6);
    }
}

TEST_CASE("pooling is invariant to neighbor order") {
    std::mt19937_64 rng(45);
    for (Pooling kind : {Pooling::pool, Pooling::mha, Pooling::mham}) {
        const auto p = random_params(rng, 2, 4, 6, 2, 3, kind);
        const auto nm = random_nm(rng, 4, 4, 6, p);
        NeighborMatrix rev{nm.logits.colwise().reverse(), nm.features.colwise().reverse()};
        CHECK((pool(kind, nm, p).p - pool(kind, rev, p).p).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("tape pooling equals plain pooling and its gradient") {
    std::mt19937_64 rng(46);
    for (Pooling kind : {Pooling::pool, Pooling::mha, Pooling::mham}) {
        auto p = random_params(rng, 2, 4, 6, 2, 3, kind);
        Matrix features = random_matrix(rng, 3, 6);
        auto build = [&](ag::Tape& tape, std::vector<ag::Var>& leaves) {
            leaves = {tape.leaf(features), tape.leaf(p.w), tape.leaf(p.b)};
            PoolingVars vars;
            if (kind != Pooling::pool) {
                vars.head_w = tape.leaf(p.head_w);
                vars.head_b = tape.leaf(p.head_b);
                vars.temperature_raw = tape.leaf(p.temperature_raw);
                leaves.insert(leaves.end(), {vars.head_w, vars.head_b, vars.temperature_raw});
            }
            if (kind == Pooling::mham) {
                vars.expert_w = tape.leaf(p.expert_w);
                vars.expert_b = tape.leaf(p.expert_b);
                leaves.insert(leaves.end(), {vars.expert_w, vars.expert_b});
            }
            auto logits = ag::linear(leaves[0], leaves[1], leaves[2]);
            auto probs = pool(kind, logits, leaves[0], vars);
            return std::pair{probs, ag::fna(probs, std::vector<int>{1}, 4.0, kProbabilityClamp)};
        };
        ag::Tape tape;
        std::vector<ag::Var> leaves;
        auto [probs, loss] = build(tape, leaves);
        NeighborMatrix nm{features * p.w.transpose(), features};
        nm.logits.rowwise() += p.b.col(0).transpose();
        CHECK((probs.value().col(0) - pool(kind, nm, p).p).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(loss.scalar() == doctest::Approx(fna_loss(pool(kind, nm, p).p, std::vector<int>{1}, 4.0)).epsilon(1e-12));
        tape.backward(loss);
        std::vector<Matrix*> tables = {&features, &p.w, &p.b};
        if (kind != Pooling::pool) tables.insert(tables.end(), {&p.head_w, &p.head_b, &p.temperature_raw});
        if (kind == Pooling::mham) tables.insert(tables.end(), {&p.expert_w, &p.expert_b});
        for (std::size_t i = 0; i < tables.size(); ++i) {
            const Matrix numeric = testsupport::numeric_gradient(*tables[i], [&] {
                ag::Tape t;
                std::vector<ag::Var> l;
                return build(t, l).second.scalar();
            });
            CHECK(testsupport::relative_error(tape.grad(leaves[i]), numeric) < 1e-4);
        }
    }
}

TEST_CASE("fna_loss closed forms") {
    Vector half(1);
    half << 0.5;
    CHECK(std::abs(fna_loss(half, {}, 4.0) - 0.693147) <= 1e-6);
    CHECK(fna_loss(half, {}, 4.0) == doctest::Approx(-4.0 * 0.25 * std::log(0.5)).epsilon(1e-14));
    Vector sure(2);
    sure << 1.0 - 1e-12, 0.0;
    const std::vector<int> pos = {0};
    CHECK(fna_loss(sure, pos, 4.0) < 1e-6);
    CHECK(fna_loss(sure, pos, 4.0) >= 0.0);
    Vector edges(3);
    edges << 1.0, 0.0, 1.0;
    CHECK(fna_loss(edges, pos, 4.0) < 1e-5);
    CHECK_THROWS_AS(fna_loss(half, std::vector<int>{1}, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(fna_loss(half, std::vector<int>{-1}, 4.0), std::invalid_argument);
}

TEST_CASE("joint_loss") {
    Matrix a = Matrix::Constant(2, 2, 0.5), b = Matrix::Constant(1, 3, -1.0);
    const std::vector<const Matrix*> tables = {&a, &b};
    CHECK(joint_loss(1.25, 7.0, 0.0, 0.0, tables) == 1.25);
    const Matrix z = Matrix::Zero(3, 3);
    const std::vector<const Matrix*> zeros = {&z};
    CHECK(joint_loss(1.0, 2.0, 0.5, 3.0, zeros) == 2.0);
    CHECK(joint_loss(1.0, 2.0, 0.1, 0.01, tables) == doctest::Approx(1.0 + 0.2 + 0.01 * (4 * 0.25 + 3.0)).epsilon(1e-15));
}
