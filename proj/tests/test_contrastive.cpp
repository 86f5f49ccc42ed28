#include "doctest.h"

#include "mclet/contrastive.hpp"
#include "support.hpp"

#include <cmath>

using namespace mclet;
using namespace mclet::contrastive;
using testsupport::random_matrix;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

double hand_cos(const Vector& a, const Vector& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        dot += a(i) * b(i);
        na += a(i) * a(i);
        nb += b(i) * b(i);
    }
    return dot / std::sqrt(na * nb);
}

} // namespace

TEST_CASE("projection special cases and dense oracle") {
    ProjectionParams p;
    p.w1 = Matrix::Identity(3, 3);
    p.w2 = Matrix::Identity(3, 3);
    p.b1 = Matrix::Zero(3, 1);
    p.b2 = Matrix::Zero(3, 1);
    Matrix x(1, 3);
    x << 0.5, 0.0, 2.0;
    CHECK(project(x, p) == x);

    p.b2 << 1.0, -1.0, 3.0;
    CHECK(project(Matrix::Zero(2, 3), p).row(1).transpose() == p.b2.col(0));

    std::mt19937_64 rng(31);
    ProjectionParams q{random_matrix(rng, 4, 4), random_matrix(rng, 4, 1), random_matrix(rng, 4, 4), random_matrix(rng, 4, 1)};
    const Matrix in = random_matrix(rng, 3, 4);
    const Matrix out = project(in, q);
    for (int r = 0; r < 3; ++r) {
        for (int i = 0; i < 4; ++i) {
            double z = q.b2(i, 0);
            for (int k = 0; k < 4; ++k) {
                double h = q.b1(k, 0);
                for (int j = 0; j < 4; ++j) h += q.w1(k, j) * in(r, j);
                h = h > 0.0 ? h : std::expm1(h);
                z += q.w2(i, k) * h;
            }
            CHECK(std::abs(out(r, i) - z) <= 1e-12);
        }
    }
    ag::Tape tape;
    const auto tz = project(tape.leaf(in), tape.leaf(q.w1), tape.leaf(q.b1), tape.leaf(q.w2), tape.leaf(q.b2));
    CHECK((tz.value() - out).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("cosine") {
    CHECK(cosine(vec({1, 2}), vec({1, 2})) == doctest::Approx(1.0));
    CHECK(cosine(vec({1, 0}), vec({0, 1})) == 0.0);
    CHECK(cosine(vec({1, 0}), vec({1, 1})) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    const auto before = zero_vector_warnings();
    CHECK(cosine(vec({0, 0}), vec({1, 1})) == 0.0);
    CHECK(zero_vector_warnings() == before + 1);
}

TEST_CASE("pair_loss closed forms") {
    const Vector u = vec({1, 0});
    const std::vector<Vector> none;
    CHECK(pair_loss(u, u, none, none, 0.6) == 0.0);
    const std::vector<Vector> intra = {vec({0, 1})};
    CHECK(pair_loss(u, u, intra, none, 1.0) == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-12));
    CHECK(std::abs(pair_loss(u, u, intra, none, 1.0) - 0.313262) <= 1e-6);
    const std::vector<Vector> inter = {vec({1, 1})};
    CHECK(pair_loss(u, u, intra, inter, 1.0) > pair_loss(u, u, intra, none, 1.0));
    CHECK(std::isfinite(pair_loss(u, vec({-1, 0}), intra, inter, 0.01)));
    CHECK_THROWS_AS(pair_loss(u, Vector(), none, none, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(pair_loss(u, u, none, none, 0.0), std::invalid_argument);
}

TEST_CASE("cl_loss: scalar two-node oracle, symmetry, scale invariance") {
    std::mt19937_64 rng(32);
    const Matrix a = random_matrix(rng, 2, 3);
    const Matrix b = random_matrix(rng, 2, 3);
    const double tau = 0.6;
    // Each anchor has one intra and one inter negative.
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) {
        const int k = 1 - i;
        const Vector ai = a.row(i).transpose(), bi = b.row(i).transpose();
        const Vector ak = a.row(k).transpose(), bk = b.row(k).transpose();
        auto term = [&](const Vector& x, const Vector& pos, const Vector& intra, const Vector& inter) {
            const double p = std::exp(hand_cos(x, pos) / tau);
            return -std::log(p / (p + std::exp(hand_cos(x, intra) / tau) + std::exp(hand_cos(x, inter) / tau)));
        };
        expected += term(ai, bi, ak, bk) + term(bi, ai, bk, ak);
    }
    expected /= 2.0;
    const std::vector<std::pair<Matrix, Matrix>> blocks = {{a, b}};
    CHECK(cl_loss(blocks, tau) == doctest::Approx(expected).epsilon(1e-12));

    ag::Tape tape;
    const std::vector<Block> tblocks = {{tape.leaf(a), tape.leaf(b)}};
    CHECK(contrastive::cl_loss(tape, tblocks, tau).scalar() == doctest::Approx(expected).epsilon(1e-12));

    const std::vector<std::pair<Matrix, Matrix>> swapped = {{b, a}};
    CHECK(std::abs(cl_loss(swapped, tau) - cl_loss(blocks, tau)) <= 1e-12);
    const Matrix a3 = 3.0 * a, b3 = 3.0 * b;
    const std::vector<std::pair<Matrix, Matrix>> scaled = {{a3, b3}};
    CHECK(std::abs(cl_loss(scaled, tau) - cl_loss(blocks, tau)) < 1e-9);

    const Matrix one = random_matrix(rng, 1, 3);
    const std::vector<std::pair<Matrix, Matrix>> single = {{one, one}};
    CHECK(cl_loss(single, tau) == 0.0);
}

TEST_CASE("tape cl_loss equals the reference over several blocks") {
    std::mt19937_64 rng(33);
    std::vector<std::pair<Matrix, Matrix>> blocks;
    for (int m : {4, 1, 3}) blocks.emplace_back(random_matrix(rng, m, 5), random_matrix(rng, m, 5));
    ag::Tape tape;
    std::vector<Block> tb;
    for (const auto& [a, b] : blocks) tb.push_back({tape.leaf(a), tape.leaf(b)});
    CHECK(contrastive::cl_loss(tape, tb, 0.4).scalar() == doctest::Approx(cl_loss(blocks, 0.4)).epsilon(1e-12));
}

TEST_CASE("cl_loss gradient through every projection parameter") {
    std::mt19937_64 rng(34);
    const Matrix xa = random_matrix(rng, 4, 3), xb = random_matrix(rng, 4, 3);
    std::vector<Matrix> params;
    for (int s = 0; s < 2; ++s) {
        params.push_back(random_matrix(rng, 3, 3));
        params.push_back(random_matrix(rng, 3, 1));
        params.push_back(random_matrix(rng, 3, 3));
        params.push_back(random_matrix(rng, 3, 1));
    }
    auto build = [&](ag::Tape& tape, std::vector<ag::Var>& leaves) {
        leaves.clear();
        for (const auto& p : params) leaves.push_back(tape.leaf(p));
        auto za = project(tape.constant(xa), leaves[0], leaves[1], leaves[2], leaves[3]);
        auto zb = project(tape.constant(xb), leaves[4], leaves[5], leaves[6], leaves[7]);
        const std::vector<Block> blocks = {{za, zb}};
        return contrastive::cl_loss(tape, blocks, 0.6);
    };
    ag::Tape tape;
    std::vector<ag::Var> leaves;
    auto loss = build(tape, leaves);
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix numeric = testsupport::numeric_gradient(params[i], [&] {
            ag::Tape t;
            std::vector<ag::Var> l;
            return build(t, l).scalar();
        });
        CHECK(testsupport::relative_error(tape.grad(leaves[i]), numeric) < 1e-4);
    }
}

TEST_CASE("negative cap samples a subset of negatives") {
    std::mt19937_64 rng(35);
    const Matrix a = random_matrix(rng, 6, 4), b = random_matrix(rng, 6, 4);
    ag::Tape tape;
    auto full = block_loss_sum(tape.leaf(a), tape.leaf(b), 0.5);
    std::mt19937_64 r1(1), r2(1);
    auto capped1 = block_loss_sum(tape.leaf(a), tape.leaf(b), 0.5, 3, &r1);
    auto capped2 = block_loss_sum(tape.leaf(a), tape.leaf(b), 0.5, 3, &r2);
    CHECK(capped1.scalar() < full.scalar());
    CHECK(capped1.scalar() == capped2.scalar());
    CHECK_THROWS_AS(block_loss_sum(tape.leaf(a), tape.leaf(b), 0.5, 3, nullptr), std::invalid_argument);
}
