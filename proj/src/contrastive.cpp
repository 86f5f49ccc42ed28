#include "mclet/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mclet::contrastive {

namespace {

std::atomic<std::size_t> g_zero_vector_warnings{0};

void check_projection(Eigen::Index width, const Matrix& w1, const Matrix& b1, const Matrix& w2,
                      const Matrix& b2) {
    const Eigen::Index d = w1.rows();
    if (w1.cols() != width || w2.rows() != d || w2.cols() != d || b1.rows() != d || b1.cols() != 1 ||
        b2.rows() != d || b2.cols() != 1) {
        throw std::invalid_argument("project: parameter shapes do not match input width");
    }
}

} // namespace

Matrix project(const Matrix& x, const ProjectionParams& p) {
    check_projection(x.cols(), p.w1, p.b1, p.w2, p.b2);
    Matrix h = x * p.w1.transpose();
    h.rowwise() += p.b1.col(0).transpose();
    h = h.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    Matrix z = h * p.w2.transpose();
    z.rowwise() += p.b2.col(0).transpose();
    return z;
}

ag::Var project(ag::Var x, ag::Var w1, ag::Var b1, ag::Var w2, ag::Var b2) {
    check_projection(x.cols(), w1.value(), b1.value(), w2.value(), b2.value());
    return ag::linear(ag::elu(ag::linear(x, w1, b1)), w2, b2);
}

double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine: length mismatch");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        g_zero_vector_warnings.fetch_add(1, std::memory_order_relaxed);
        return 0.0;
    }
    return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

std::size_t zero_vector_warnings() {
    return g_zero_vector_warnings.load(std::memory_order_relaxed);
}

double pair_loss(const Vector& anchor, const Vector& positive, std::span<const Vector> intra_negatives,
                 std::span<const Vector> inter_negatives, double tau) {
    if (positive.size() == 0 || anchor.size() == 0) {
        throw std::invalid_argument("pair_loss: empty anchor or positive");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("pair_loss: tau must be positive");
    }
    std::vector<double> logits;
    logits.reserve(1 + intra_negatives.size() + inter_negatives.size());
    logits.push_back(cosine(anchor, positive) / tau);
    for (const auto& u : intra_negatives) logits.push_back(cosine(anchor, u) / tau);
    for (const auto& v : inter_negatives) logits.push_back(cosine(anchor, v) / tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    return -(logits.front() - mx) + std::log(denom);
}

double cl_loss(std::span<const std::pair<Matrix, Matrix>> blocks, double tau) {
    double total = 0.0;
    std::size_t anchors = 0;
    for (const auto& [a, b] : blocks) {
        if (a.rows() != b.rows() || a.cols() != b.cols()) {
            throw std::invalid_argument("cl_loss: block views are not row-aligned");
        }
        const Eigen::Index m = a.rows();
        for (Eigen::Index i = 0; i < m; ++i) {
            std::vector<Vector> a_others;
            std::vector<Vector> b_others;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (k == i) continue;
                a_others.emplace_back(a.row(k).transpose());
                b_others.emplace_back(b.row(k).transpose());
            }
            const Vector u = a.row(i).transpose();
            const Vector v = b.row(i).transpose();
            total += pair_loss(u, v, a_others, b_others, tau);
            total += pair_loss(v, u, b_others, a_others, tau);
            ++anchors;
        }
    }
    return anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
}

namespace {

// Per anchor, keep `cap` of its 2(m-1) candidates (inter first, then intra).
std::pair<Eigen::ArrayXXd, Eigen::ArrayXXd> sample_masks(Eigen::Index m, std::size_t cap, std::mt19937_64& rng) {
    Eigen::ArrayXXd inter = Eigen::ArrayXXd::Zero(m, m);
    Eigen::ArrayXXd intra = Eigen::ArrayXXd::Zero(m, m);
    std::vector<Eigen::Index> candidates(static_cast<std::size_t>(2 * (m - 1)));
    for (Eigen::Index i = 0; i < m; ++i) {
        std::size_t c = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j == i) continue;
            candidates[c++] = j;
            candidates[c++] = m + j;
        }
        std::shuffle(candidates.begin(), candidates.end(), rng);
        for (std::size_t k = 0; k < cap && k < candidates.size(); ++k) {
            const Eigen::Index j = candidates[k];
            if (j < m) {
                inter(i, j) = 1.0;
            } else {
                intra(i, j - m) = 1.0;
            }
        }
    }
    return {std::move(inter), std::move(intra)};
}

} // namespace

ag::Var block_loss_sum(ag::Var a, ag::Var b, double tau, std::size_t negative_cap, std::mt19937_64* rng) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("cl_loss: tau must be positive");
    }
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("cl_loss: block views are not row-aligned");
    }
    const Eigen::Index m = a.rows();
    const double inv_tau = 1.0 / tau;
    ag::Var ua = ag::row_normalize(a);
    ag::Var ub = ag::row_normalize(b);
    ag::Var s_ab = ag::scale(ag::matmul_nt(ua, ub), inv_tau);
    ag::Var s_ba = ag::scale(ag::matmul_nt(ub, ua), inv_tau);
    ag::Var s_aa = ag::scale(ag::matmul_nt(ua, ua), inv_tau);
    ag::Var s_bb = ag::scale(ag::matmul_nt(ub, ub), inv_tau);

    Eigen::ArrayXXd inter_ab, intra_ab, inter_ba, intra_ba;
    const bool capped = negative_cap > 0 && static_cast<std::size_t>(2 * (m - 1)) > negative_cap;
    if (capped) {
        if (rng == nullptr) {
            throw std::invalid_argument("cl_loss: negative_cap needs a random generator");
        }
        std::tie(inter_ab, intra_ab) = sample_masks(m, negative_cap, *rng);
        std::tie(inter_ba, intra_ba) = sample_masks(m, negative_cap, *rng);
    }
    ag::Var forward = ag::info_nce(s_ab, s_aa, inter_ab, intra_ab);
    ag::Var reverse = ag::info_nce(s_ba, s_bb, inter_ba, intra_ba);
    return ag::add(ag::sum(forward), ag::sum(reverse));
}

ag::Var cl_loss(ag::Tape& tape, std::span<const Block> blocks, double tau, std::size_t negative_cap,
                std::mt19937_64* rng) {
    std::size_t anchors = 0;
    ag::Var total;
    for (const auto& blk : blocks) {
        if (blk.a.rows() == 0) continue;
        ag::Var term = block_loss_sum(blk.a, blk.b, tau, negative_cap, rng);
        total = total.valid() ? ag::add(total, term) : term;
        anchors += static_cast<std::size_t>(blk.a.rows());
    }
    if (anchors == 0) {
        return tape.constant(Matrix::Zero(1, 1));
    }
    return ag::scale(total, 1.0 / static_cast<double>(anchors));
}

} // namespace mclet::contrastive
