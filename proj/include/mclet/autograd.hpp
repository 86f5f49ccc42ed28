#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every value produced during a forward pass together with a
// closure that pushes the output gradient back to the inputs. Nodes are
// appended in evaluation order, so a reverse sweep over the node list is a
// valid topological order. Rows are samples (nodes, neighbors) and columns are
// features throughout the library.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace mclet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

namespace ag {

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Value that never receives a gradient.
    Var constant(Matrix value);

    /// Differentiable input backed by caller-owned storage. The storage must
    /// outlive the tape; it is read, never written.
    Var leaf(const Matrix& external);

    /// Records an op result. `backward` runs only if some input needs a grad.
    Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

    /// Seeds d(output)/d(output) = 1 for a 1x1 output and sweeps in reverse.
    void backward(Var output);

    /// Gradient of the last backward sweep; empty matrix if none reached it.
    const Matrix& grad(Var v) const;

    /// Adds `g` into the gradient slot of `v` (allocating zeros on first use).
    Matrix& grad_slot(Var v);
    bool needs_grad(Var v) const;

    const Matrix& value(int id) const;
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix owned;
        const Matrix* external = nullptr;
        Matrix grad;
        Backward backward;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

// Elementwise / structural ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var cwise_mul(Var a, Var b);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var gather_rows(Var x, std::span<const int> rows);
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);

// Products. linear() maps rows: x (n x in), w (out x in), b (out x 1) -> n x out.
Var matmul(Var a, Var b);
Var matmul_tn(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var linear(Var x, Var w, Var b);
/// a * x for a constant sparse matrix; `a` must outlive the tape.
Var spmm(const SparseMatrix& a, Var x);

// Nonlinearities.
Var elu(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
/// Softmax across the columns of each row (every row sums to 1).
Var softmax_rows(Var x);
/// Softmax down each column (every column sums to 1).
Var softmax_cols(Var x);
/// Scales each nonzero row to unit length; zero rows stay zero.
Var row_normalize(Var x);

// Reductions to 1x1.
Var sum(Var x);
Var mean(Var x);
Var sum_squares(Var x);

/// Temperature-sharpened head mixture used by attention pooling.
/// scores: N x H (column i is a head's pooled logit vector s_i),
/// temperatures: H x 1. Returns N x 1: sum_i softmax(T_i * s_i) .* s_i.
Var tempered_head_mix(Var scores, Var temperatures);

/// Per-anchor InfoNCE terms. sim_ab(i, j) and sim_aa(i, j) are already divided
/// by the temperature. Row i yields
///   -sim_ab(i,i) + log( exp(sim_ab(i,i)) + sum_{j!=i, inter(i,j)} exp(sim_ab(i,j))
///                                       + sum_{j!=i, intra(i,j)} exp(sim_aa(i,j)) ).
/// Empty masks select every off-diagonal entry. Returns m x 1.
Var info_nce(Var sim_ab, Var sim_aa, const Eigen::ArrayXXd& inter_mask,
             const Eigen::ArrayXXd& intra_mask);

/// False-negative aware binary loss over a probability column p (N x 1).
/// Probabilities are clamped to [clamp, 1 - clamp]; the clamp is flat.
Var fna(Var p, std::span<const int> positives, double beta, double clamp);

} // namespace ag
} // namespace mclet
