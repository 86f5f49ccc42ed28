#pragma once

// Cross-view contrastive learning: per-stream MLP projection and the
// symmetric InfoNCE objective with intra- and inter-view negatives.

#include "mclet/autograd.hpp"

#include <atomic>
#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace mclet::contrastive {

/// z = W2 * ELU(W1 * x + b1) + b2, applied to every row of x.
struct ProjectionParams {
    Matrix w1;  // d x d
    Matrix b1;  // d x 1
    Matrix w2;  // d x d
    Matrix b2;  // d x 1
};

Matrix project(const Matrix& x, const ProjectionParams& p);
ag::Var project(ag::Var x, ag::Var w1, ag::Var b1, ag::Var w2, ag::Var b2);

/// Cosine similarity; 0 (and a bumped warning counter) if either side is zero.
double cosine(const Vector& u, const Vector& v);
std::size_t zero_vector_warnings();

/// -log( e^{cos(a,p)/tau} / (e^{cos(a,p)/tau} + sum_intra e^{cos(a,u_k)/tau}
///                                            + sum_inter e^{cos(a,v_k)/tau}) )
/// evaluated with a max shift. Throws std::invalid_argument on an empty
/// positive or tau <= 0.
double pair_loss(const Vector& anchor, const Vector& positive, std::span<const Vector> intra_negatives,
                 std::span<const Vector> inter_negatives, double tau);

enum class NodeKind { entity, type, cluster };

/// Which projected streams are contrasted. Stream ids index the six
/// projectors (see model::Stream).
struct PairSpec {
    int stream_a = 0;
    int stream_b = 0;
    NodeKind kind = NodeKind::entity;
};

struct ContrastiveConfig {
    double tau = 0.6;
    std::vector<PairSpec> pairs;
    /// Max negatives per anchor and direction; 0 keeps all of them.
    std::size_t negative_cap = 0;
};

/// Reference loss over row-aligned blocks (row i of `a` and of `b` are the
/// same node seen from two views). Mean over anchors of
/// L(u_i, v_i) + L(v_i, u_i), all other rows of both blocks as negatives.
double cl_loss(std::span<const std::pair<Matrix, Matrix>> blocks, double tau);

/// Differentiable block term: sum over anchors of L(u_i,v_i) + L(v_i,u_i).
/// With a positive `negative_cap`, each anchor keeps a uniform sample of at
/// most that many of its 2(m-1) negatives per direction.
ag::Var block_loss_sum(ag::Var a, ag::Var b, double tau, std::size_t negative_cap = 0,
                       std::mt19937_64* rng = nullptr);

struct Block {
    ag::Var a;
    ag::Var b;
};

/// Mean of block_loss_sum over the total anchor count. Returns a constant
/// zero if there are no anchors.
ag::Var cl_loss(ag::Tape& tape, std::span<const Block> blocks, double tau, std::size_t negative_cap = 0,
                std::mt19937_64* rng = nullptr);

} // namespace mclet::contrastive
