#include "mclet/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mclet::predictor {

std::string_view to_string(Pooling p) {
    switch (p) {
    case Pooling::pool: return "pool";
    case Pooling::mha: return "mha";
    case Pooling::mham: return "mham";
    }
    return "?";
}

Pooling parse_pooling(std::string_view name) {
    if (name == "pool") return Pooling::pool;
    if (name == "mha") return Pooling::mha;
    if (name == "mham") return Pooling::mham;
    throw std::invalid_argument("unknown pooling '" + std::string(name) + "'");
}

namespace {

double softplus(double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

void softmax_rows_inplace(Matrix& x) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        x.row(r) = (x.row(r).array() - m).exp().matrix();
        x.row(r) /= x.row(r).sum();
    }
}

void softmax_cols_inplace(Matrix& x) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double m = x.col(c).maxCoeff();
        x.col(c) = (x.col(c).array() - m).exp().matrix();
        x.col(c) /= x.col(c).sum();
    }
}

Vector affine_rows_bias(const Matrix& b) {
    return b.col(0);
}

// Shared tail of both attention poolings: p = sigmoid(sum_h softmax(T_h s_h) .* s_h).
Vector mix_heads(const Matrix& logits, const Matrix& attention, const Vector& temps) {
    const Matrix scores = logits.transpose() * attention;  // N x H
    Vector mixed = Vector::Zero(scores.rows());
    for (Eigen::Index h = 0; h < scores.cols(); ++h) {
        const Eigen::ArrayXd z = temps(h) * scores.col(h).array();
        Eigen::ArrayXd w = (z - z.maxCoeff()).exp();
        w /= w.sum();
        mixed += (w * scores.col(h).array()).matrix();
    }
    return mixed.unaryExpr([](double v) { return sigmoid(v); });
}

void require_rows(const NeighborMatrix& nm) {
    if (nm.logits.rows() == 0 || nm.logits.rows() != nm.features.rows()) {
        throw std::invalid_argument("pooling needs at least one neighbor row");
    }
}

} // namespace

Vector PredictorParams::temperatures() const {
    return temperature_raw.col(0).unaryExpr([](double v) { return softplus(v); });
}

FinalEmbeddings concat_final(const Matrix& entity_e2t, const Matrix& entity_e2c, const Matrix& type_e2t,
                             const Matrix& type_c2t) {
    if (entity_e2t.rows() != entity_e2c.rows() || type_e2t.rows() != type_c2t.rows()) {
        throw std::invalid_argument("concat_final: stream row counts differ");
    }
    FinalEmbeddings out;
    out.entity.resize(entity_e2t.rows(), entity_e2t.cols() + entity_e2c.cols());
    out.entity << entity_e2t, entity_e2c;
    out.type.resize(type_e2t.rows(), type_e2t.cols() + type_c2t.cols());
    out.type << type_e2t, type_c2t;
    return out;
}

Vector neighbor_logits(const Vector& z, const Vector& r, const Matrix& w, const Matrix& b) {
    if (z.size() != r.size() || w.cols() != z.size() || b.rows() != w.rows() || b.cols() != 1) {
        throw std::invalid_argument("neighbor_logits: shape mismatch");
    }
    return w * (z - r) + affine_rows_bias(b);
}

std::optional<NeighborMatrix> assemble(const kg::NeighborSet& neighbors, const FinalEmbeddings& emb,
                                       const PredictorParams& params, std::optional<int> masked_type) {
    const Eigen::Index width = emb.entity.cols();
    if (emb.type.cols() != width || params.relation.cols() != width || params.w.cols() != width) {
        throw std::invalid_argument("assemble: embedding widths disagree");
    }
    std::vector<Vector> rows;
    rows.reserve(neighbors.size());
    for (const auto& [r, o] : neighbors.relational) {
        rows.emplace_back(emb.entity.row(o).transpose() - params.relation.row(r).transpose());
    }
    const Vector has_type = params.relation.row(params.has_type_row()).transpose();
    for (int t : neighbors.types) {
        if (masked_type && *masked_type == t) continue;
        rows.emplace_back(emb.type.row(t).transpose() - has_type);
    }
    if (rows.empty()) {
        return std::nullopt;
    }
    NeighborMatrix nm;
    nm.features.resize(static_cast<Eigen::Index>(rows.size()), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nm.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    nm.logits = nm.features * params.w.transpose();
    nm.logits.rowwise() += params.b.col(0).transpose();
    return nm;
}

PoolResult pool_avg(const NeighborMatrix& nm) {
    require_rows(nm);
    PoolResult out;
    out.p = nm.logits.colwise().mean().transpose().unaryExpr([](double v) { return sigmoid(v); });
    return out;
}

PoolResult pool_mha(const NeighborMatrix& nm, const PredictorParams& params) {
    require_rows(nm);
    Matrix a = nm.features * params.head_w.transpose();
    a.rowwise() += params.head_b.col(0).transpose();
    softmax_cols_inplace(a);
    PoolResult out;
    out.p = mix_heads(nm.logits, a, params.temperatures());
    out.attention = std::move(a);
    return out;
}

PoolResult pool_mham(const NeighborMatrix& nm, const PredictorParams& params) {
    require_rows(nm);
    Matrix gate = nm.features * params.expert_w.transpose();
    gate.rowwise() += params.expert_b.col(0).transpose();
    softmax_rows_inplace(gate);  // over experts
    Matrix a = gate * params.head_w.transpose();
    a.rowwise() += params.head_b.col(0).transpose();
    softmax_cols_inplace(a);  // over neighbors, per head
    PoolResult out;
    out.p = mix_heads(nm.logits, a, params.temperatures());
    out.attention = std::move(a);
    return out;
}

PoolResult pool(Pooling kind, const NeighborMatrix& nm, const PredictorParams& params) {
    switch (kind) {
    case Pooling::pool: return pool_avg(nm);
    case Pooling::mha: return pool_mha(nm, params);
    case Pooling::mham: return pool_mham(nm, params);
    }
    throw std::invalid_argument("bad pooling kind");
}

double fna_loss(const Vector& p, std::span<const int> positives, double beta) {
    const Eigen::Index n = p.size();
    std::vector<char> is_pos(static_cast<std::size_t>(n), 0);
    for (int t : positives) {
        if (t < 0 || t >= n) {
            throw std::invalid_argument("fna_loss: positive type id " + std::to_string(t) + " out of range");
        }
        is_pos[static_cast<std::size_t>(t)] = 1;
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double q = std::clamp(p(j), kProbabilityClamp, 1.0 - kProbabilityClamp);
        if (is_pos[static_cast<std::size_t>(j)]) {
            total -= std::log(q);
        } else {
            total -= beta * (q - q * q) * std::log1p(-q);
        }
    }
    return total;
}

double joint_loss(double l_et, double l_cl, double lambda, double gamma, std::span<const Matrix* const> tables) {
    double reg = 0.0;
    for (const Matrix* t : tables) {
        reg += t->squaredNorm();
    }
    return l_et + lambda * l_cl + gamma * reg;
}

ag::Var pool(Pooling kind, ag::Var logits, ag::Var features, const PoolingVars& vars) {
    if (logits.rows() == 0 || logits.rows() != features.rows()) {
        throw std::invalid_argument("pooling needs at least one neighbor row");
    }
    if (kind == Pooling::pool) {
        const Eigen::Index n = logits.rows();
        ag::Var avg = logits.tape()->constant(Matrix::Constant(n, 1, 1.0 / static_cast<double>(n)));
        return ag::sigmoid(ag::matmul_tn(logits, avg));
    }
    ag::Var attention;
    if (kind == Pooling::mham) {
        ag::Var gate = ag::softmax_rows(ag::linear(features, vars.expert_w, vars.expert_b));
        attention = ag::softmax_cols(ag::linear(gate, vars.head_w, vars.head_b));
    } else {
        attention = ag::softmax_cols(ag::linear(features, vars.head_w, vars.head_b));
    }
    ag::Var scores = ag::matmul_tn(logits, attention);
    return ag::sigmoid(ag::tempered_head_mix(scores, ag::softplus(vars.temperature_raw)));
}

} // namespace mclet::predictor
