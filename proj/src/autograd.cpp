#include "mclet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mclet::ag {

namespace {

void require(bool cond, const char* what) {
    if (!cond) {
        throw std::invalid_argument(std::string("autograd: ") + what);
    }
}

void require_same_tape(Var a, Var b) {
    require(a.valid() && b.valid() && a.tape() == b.tape(), "operands live on different tapes");
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

const Matrix& Var::value() const {
    return tape_->value(id_);
}

Var Tape::constant(Matrix value) {
    Node node;
    node.owned = std::move(value);
    nodes_.push_back(std::move(node));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Matrix& external) {
    Node node;
    node.external = &external;
    node.needs_grad = true;
    nodes_.push_back(std::move(node));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    Node node;
    node.owned = std::move(value);
    for (const Var& in : inputs) {
        require(in.tape() == this, "input recorded on another tape");
        node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
    }
    if (node.needs_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.external != nullptr ? *n.external : n.owned;
}

bool Tape::needs_grad(Var v) const {
    return nodes_.at(static_cast<std::size_t>(v.id())).needs_grad;
}

Matrix& Tape::grad_slot(Var v) {
    Node& n = nodes_.at(static_cast<std::size_t>(v.id()));
    if (n.grad.size() == 0) {
        const Matrix& val = value(v.id());
        n.grad = Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
}

const Matrix& Tape::grad(Var v) const {
    return nodes_.at(static_cast<std::size_t>(v.id())).grad;
}

void Tape::backward(Var output) {
    require(output.tape() == this, "backward on foreign output");
    require(output.rows() == 1 && output.cols() == 1, "backward needs a scalar output");
    for (Node& n : nodes_) {
        n.grad.resize(0, 0);
    }
    grad_slot(output)(0, 0) = 1.0;
    for (int id = output.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward || n.grad.size() == 0) {
            continue;
        }
        // The closure may touch other slots; copy keeps the reference stable.
        const Matrix g = n.grad;
        n.backward(*this, g);
    }
}

// --- elementwise / structural ---------------------------------------------

Var add(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
    return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.needs_grad(a)) t.grad_slot(a) += g;
        if (t.needs_grad(b)) t.grad_slot(b) += g;
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
    return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.needs_grad(a)) t.grad_slot(a) += g;
        if (t.needs_grad(b)) t.grad_slot(b) -= g;
    });
}

Var scale(Var a, double c) {
    return a.tape()->record(c * a.value(), {a}, [a, c](Tape& t, const Matrix& g) {
        t.grad_slot(a) += c * g;
    });
}

Var cwise_mul(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_mul shape mismatch");
    return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                            [a, b](Tape& t, const Matrix& g) {
                                if (t.needs_grad(a)) t.grad_slot(a) += g.cwiseProduct(b.value());
                                if (t.needs_grad(b)) t.grad_slot(b) += g.cwiseProduct(a.value());
                            });
}

Var concat_cols(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows(), "concat_cols row mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Eigen::Index ca = a.cols();
    const Eigen::Index cb = b.cols();
    return a.tape()->record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Matrix& g) {
        if (t.needs_grad(a)) t.grad_slot(a) += g.leftCols(ca);
        if (t.needs_grad(b)) t.grad_slot(b) += g.rightCols(cb);
    });
}

Var concat_rows(Var a, Var b) {
    require_same_tape(a, b);
    require(a.cols() == b.cols(), "concat_rows column mismatch");
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a.value(), b.value();
    const Eigen::Index ra = a.rows();
    const Eigen::Index rb = b.rows();
    return a.tape()->record(std::move(out), {a, b}, [a, b, ra, rb](Tape& t, const Matrix& g) {
        if (t.needs_grad(a)) t.grad_slot(a) += g.topRows(ra);
        if (t.needs_grad(b)) t.grad_slot(b) += g.bottomRows(rb);
    });
}

Var gather_rows(Var x, std::span<const int> rows) {
    const Matrix& xv = x.value();
    Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < xv.rows(), "gather_rows index out of range");
        out.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
    }
    std::vector<int> idx(rows.begin(), rows.end());
    return x.tape()->record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, const Matrix& g) {
        Matrix& slot = t.grad_slot(x);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            slot.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        }
    });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= x.rows(), "slice_rows out of range");
    return x.tape()->record(x.value().middleRows(start, count), {x},
                            [x, start, count](Tape& t, const Matrix& g) {
                                t.grad_slot(x).middleRows(start, count) += g;
                            });
}

// --- products ---------------------------------------------------------------

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    require(a.cols() == b.rows(), "matmul shape mismatch");
    return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.needs_grad(a)) t.grad_slot(a).noalias() += g * b.value().transpose();
        if (t.needs_grad(b)) t.grad_slot(b).noalias() += a.value().transpose() * g;
    });
}

Var matmul_tn(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows(), "matmul_tn shape mismatch");
    return a.tape()->record(a.value().transpose() * b.value(), {a, b},
                            [a, b](Tape& t, const Matrix& g) {
                                if (t.needs_grad(a)) t.grad_slot(a).noalias() += b.value() * g.transpose();
                                if (t.needs_grad(b)) t.grad_slot(b).noalias() += a.value() * g;
                            });
}

Var matmul_nt(Var a, Var b) {
    require_same_tape(a, b);
    require(a.cols() == b.cols(), "matmul_nt shape mismatch");
    return a.tape()->record(a.value() * b.value().transpose(), {a, b},
                            [a, b](Tape& t, const Matrix& g) {
                                if (t.needs_grad(a)) t.grad_slot(a).noalias() += g * b.value();
                                if (t.needs_grad(b)) t.grad_slot(b).noalias() += g.transpose() * a.value();
                            });
}

Var linear(Var x, Var w, Var b) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    require(x.cols() == w.cols(), "linear input width mismatch");
    require(b.rows() == w.rows() && b.cols() == 1, "linear bias shape mismatch");
    Matrix out = x.value() * w.value().transpose();
    out.rowwise() += b.value().col(0).transpose();
    return x.tape()->record(std::move(out), {x, w, b}, [x, w, b](Tape& t, const Matrix& g) {
        if (t.needs_grad(x)) t.grad_slot(x).noalias() += g * w.value();
        if (t.needs_grad(w)) t.grad_slot(w).noalias() += g.transpose() * x.value();
        if (t.needs_grad(b)) t.grad_slot(b) += g.colwise().sum().transpose();
    });
}

Var spmm(const SparseMatrix& a, Var x) {
    require(a.cols() == x.rows(), "spmm shape mismatch");
    Matrix out = a * x.value();
    const SparseMatrix* ap = &a;
    return x.tape()->record(std::move(out), {x}, [ap, x](Tape& t, const Matrix& g) {
        t.grad_slot(x).noalias() += ap->transpose() * g;
    });
}

// --- nonlinearities ---------------------------------------------------------

Var elu(Var x) {
    const Matrix& xv = x.value();
    Matrix out = xv.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        const Matrix d = x.value().unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
        t.grad_slot(x) += g.cwiseProduct(d);
    });
}

Var sigmoid(Var x) {
    Matrix out = x.value().unaryExpr([](double v) { return stable_sigmoid(v); });
    Matrix y = out;
    return x.tape()->record(std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Matrix& g) {
        t.grad_slot(x) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
    });
}

Var softplus(Var x) {
    Matrix out = x.value().unaryExpr([](double v) {
        return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    });
    return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        const Matrix d = x.value().unaryExpr([](double v) { return stable_sigmoid(v); });
        t.grad_slot(x) += g.cwiseProduct(d);
    });
}

namespace {

Matrix softmax_rowwise(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        out.row(r) = (x.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

} // namespace

Var softmax_rows(Var x) {
    Matrix out = softmax_rowwise(x.value());
    Matrix y = out;
    return x.tape()->record(std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Matrix& g) {
        const Vector dot = g.cwiseProduct(y).rowwise().sum();
        Matrix d = g;
        d.colwise() -= dot;
        t.grad_slot(x) += y.cwiseProduct(d);
    });
}

Var softmax_cols(Var x) {
    Matrix out = softmax_rowwise(x.value().transpose()).transpose();
    Matrix y = out;
    return x.tape()->record(std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Matrix& g) {
        const Eigen::RowVectorXd dot = g.cwiseProduct(y).colwise().sum();
        Matrix d = g;
        d.rowwise() -= dot;
        t.grad_slot(x) += y.cwiseProduct(d);
    });
}

Var row_normalize(Var x) {
    const Matrix& xv = x.value();
    const Vector norms = xv.rowwise().norm();
    Matrix out = xv;
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        if (norms(r) > 0.0) {
            out.row(r) /= norms(r);
        }
    }
    Matrix y = out;
    return x.tape()->record(std::move(out), {x},
                            [x, norms, y = std::move(y)](Tape& t, const Matrix& g) {
                                Matrix& slot = t.grad_slot(x);
                                for (Eigen::Index r = 0; r < y.rows(); ++r) {
                                    if (norms(r) <= 0.0) continue;
                                    const double proj = y.row(r).dot(g.row(r));
                                    slot.row(r) += (g.row(r) - proj * y.row(r)) / norms(r);
                                }
                            });
}

// --- reductions -------------------------------------------------------------

Var sum(Var x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().sum();
    return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        t.grad_slot(x).array() += g(0, 0);
    });
}

Var mean(Var x) {
    require(x.value().size() > 0, "mean of empty matrix");
    const double n = static_cast<double>(x.value().size());
    Matrix out(1, 1);
    out(0, 0) = x.value().sum() / n;
    return x.tape()->record(std::move(out), {x}, [x, n](Tape& t, const Matrix& g) {
        t.grad_slot(x).array() += g(0, 0) / n;
    });
}

Var sum_squares(Var x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().squaredNorm();
    return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        t.grad_slot(x) += (2.0 * g(0, 0)) * x.value();
    });
}

// --- fused ops --------------------------------------------------------------

Var tempered_head_mix(Var scores, Var temperatures) {
    require_same_tape(scores, temperatures);
    const Matrix& s = scores.value();
    const Matrix& temp = temperatures.value();
    require(temp.rows() == s.cols() && temp.cols() == 1, "tempered_head_mix temperature shape");

    const Eigen::Index heads = s.cols();
    Matrix weights(s.rows(), heads);
    Matrix out = Matrix::Zero(s.rows(), 1);
    for (Eigen::Index h = 0; h < heads; ++h) {
        const Eigen::ArrayXd z = temp(h, 0) * s.col(h).array();
        const Eigen::ArrayXd e = (z - z.maxCoeff()).exp();
        weights.col(h) = (e / e.sum()).matrix();
        out.col(0) += weights.col(h).cwiseProduct(s.col(h));
    }
    return scores.tape()->record(
        std::move(out), {scores, temperatures},
        [scores, temperatures, weights = std::move(weights)](Tape& t, const Matrix& g) {
            const Matrix& s = scores.value();
            const Matrix& temp = temperatures.value();
            const Eigen::ArrayXd gc = g.col(0).array();
            Matrix ds(s.rows(), s.cols());
            Matrix dt(temp.rows(), 1);
            for (Eigen::Index h = 0; h < s.cols(); ++h) {
                const Eigen::ArrayXd w = weights.col(h).array();
                const Eigen::ArrayXd sh = s.col(h).array();
                const double gws = (gc * w * sh).sum();
                ds.col(h) = (gc * w + temp(h, 0) * w * (gc * sh - gws)).matrix();
                const double mean_s = (w * sh).sum();
                dt(h, 0) = (gc * sh * w * (sh - mean_s)).sum();
            }
            if (t.needs_grad(scores)) t.grad_slot(scores) += ds;
            if (t.needs_grad(temperatures)) t.grad_slot(temperatures) += dt;
        });
}

Var info_nce(Var sim_ab, Var sim_aa, const Eigen::ArrayXXd& inter_mask,
             const Eigen::ArrayXXd& intra_mask) {
    require_same_tape(sim_ab, sim_aa);
    const Matrix& ab = sim_ab.value();
    const Matrix& aa = sim_aa.value();
    const Eigen::Index m = ab.rows();
    require(ab.cols() == m && aa.rows() == m && aa.cols() == m, "info_nce needs square m x m inputs");
    require(inter_mask.size() == 0 || (inter_mask.rows() == m && inter_mask.cols() == m),
            "info_nce inter mask shape");
    require(intra_mask.size() == 0 || (intra_mask.rows() == m && intra_mask.cols() == m),
            "info_nce intra mask shape");

    auto inter_on = [&inter_mask](Eigen::Index i, Eigen::Index j) {
        return i != j && (inter_mask.size() == 0 || inter_mask(i, j) != 0.0);
    };
    auto intra_on = [&intra_mask](Eigen::Index i, Eigen::Index j) {
        return i != j && (intra_mask.size() == 0 || intra_mask(i, j) != 0.0);
    };

    // Softmax weights over [positive, inter..., intra...] per anchor.
    Matrix w_ab = Matrix::Zero(m, m);
    Matrix w_aa = Matrix::Zero(m, m);
    Matrix out(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        double mx = ab(i, i);
        for (Eigen::Index j = 0; j < m; ++j) {
            if (inter_on(i, j)) mx = std::max(mx, ab(i, j));
            if (intra_on(i, j)) mx = std::max(mx, aa(i, j));
        }
        double denom = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j == i || inter_on(i, j)) {
                w_ab(i, j) = std::exp(ab(i, j) - mx);
                denom += w_ab(i, j);
            }
            if (intra_on(i, j)) {
                w_aa(i, j) = std::exp(aa(i, j) - mx);
                denom += w_aa(i, j);
            }
        }
        w_ab.row(i) /= denom;
        w_aa.row(i) /= denom;
        out(i, 0) = -ab(i, i) + mx + std::log(denom);
    }
    return sim_ab.tape()->record(
        std::move(out), {sim_ab, sim_aa},
        [sim_ab, sim_aa, w_ab = std::move(w_ab), w_aa = std::move(w_aa)](Tape& t, const Matrix& g) {
            Matrix dab = w_ab;
            dab.diagonal().array() -= 1.0;
            dab = g.col(0).asDiagonal() * dab;
            if (t.needs_grad(sim_ab)) t.grad_slot(sim_ab) += dab;
            if (t.needs_grad(sim_aa)) t.grad_slot(sim_aa) += g.col(0).asDiagonal() * w_aa;
        });
}

Var fna(Var p, std::span<const int> positives, double beta, double clamp) {
    const Matrix& pv = p.value();
    require(pv.cols() == 1, "fna expects a probability column");
    const Eigen::Index n = pv.rows();
    std::vector<char> is_pos(static_cast<std::size_t>(n), 0);
    for (int t : positives) {
        if (t < 0 || t >= n) {
            throw std::invalid_argument("fna: positive type id " + std::to_string(t) +
                                        " outside [0, " + std::to_string(n) + ")");
        }
        is_pos[static_cast<std::size_t>(t)] = 1;
    }

    Matrix out(1, 1);
    double total = 0.0;
    Vector dp(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double raw = pv(j, 0);
        const double q = std::clamp(raw, clamp, 1.0 - clamp);
        const bool inside = raw > clamp && raw < 1.0 - clamp;
        if (is_pos[static_cast<std::size_t>(j)]) {
            total -= std::log(q);
            dp(j) = inside ? -1.0 / q : 0.0;
        } else {
            const double l1 = std::log1p(-q);
            total -= beta * (q - q * q) * l1;
            dp(j) = inside ? -beta * ((1.0 - 2.0 * q) * l1 - q) : 0.0;
        }
    }
    out(0, 0) = total;
    return p.tape()->record(std::move(out), {p}, [p, dp = std::move(dp)](Tape& t, const Matrix& g) {
        t.grad_slot(p).col(0) += g(0, 0) * dp;
    });
}

} // namespace mclet::ag
