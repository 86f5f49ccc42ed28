#pragma once

// Entity type prediction: per-neighbor TransE-style type logits, attention
// pooling across neighbors (mean / multi-head / multi-head with a
// mixture-of-experts gate) and the false-negative aware loss.
//
// Orientation: a NeighborMatrix stores one neighbor per ROW, so `logits` is
// n x N and `features` is n x 2d.

#include "mclet/autograd.hpp"
#include "mclet/kgdata.hpp"

#include <optional>
#include <span>
#include <string_view>

namespace mclet::predictor {

enum class Pooling { pool, mha, mham };

std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view name);

/// Rows are entities / types; width is 2d (two concatenated view streams).
struct FinalEmbeddings {
    Matrix entity;  // |E| x 2d  = [z_e<-e2t | z_e<-e2c]
    Matrix type;    // |T| x 2d  = [z_t<-e2t | z_t<-c2t]
};

FinalEmbeddings concat_final(const Matrix& entity_e2t, const Matrix& entity_e2c, const Matrix& type_e2t,
                             const Matrix& type_c2t);

struct PredictorParams {
    Matrix relation;         // (|R| + 1) x 2d, last row is has_type
    Matrix w;                // N x 2d
    Matrix b;                // N x 1
    Matrix expert_w;         // M x 2d  (mham)
    Matrix expert_b;         // M x 1
    Matrix head_w;           // H x M   (mham) or H x 2d (mha)
    Matrix head_b;           // H x 1
    Matrix temperature_raw;  // H x 1, T = softplus(raw)

    int has_type_row() const { return static_cast<int>(relation.rows()) - 1; }
    Vector temperatures() const;
};

/// W (z - r) + b.
Vector neighbor_logits(const Vector& z, const Vector& r, const Matrix& w, const Matrix& b);

struct NeighborMatrix {
    Matrix logits;    // n x N
    Matrix features;  // n x 2d, row i = z_i - r_i
};

/// Builds one row per neighbor in NeighborSet order (relational, then types).
/// `masked_type` drops that type neighbor. Returns nullopt when nothing is
/// left to score.
std::optional<NeighborMatrix> assemble(const kg::NeighborSet& neighbors, const FinalEmbeddings& emb,
                                       const PredictorParams& params,
                                       std::optional<int> masked_type = std::nullopt);

struct PoolResult {
    Vector p;          // N, in (0, 1)
    Matrix attention;  // n x H per-head neighbor weights (empty for pool)
};

PoolResult pool_avg(const NeighborMatrix& nm);
PoolResult pool_mha(const NeighborMatrix& nm, const PredictorParams& params);
PoolResult pool_mham(const NeighborMatrix& nm, const PredictorParams& params);
PoolResult pool(Pooling kind, const NeighborMatrix& nm, const PredictorParams& params);

inline constexpr double kProbabilityClamp = 1e-7;

/// -sum_{j not pos} beta (p_j - p_j^2) log(1 - p_j) - sum_{j in pos} log p_j,
/// with p clamped to [1e-7, 1 - 1e-7]. Throws on out-of-range positives.
double fna_loss(const Vector& p, std::span<const int> positives, double beta);

/// L_ET + lambda L_CL + gamma * sum of squares over every table.
double joint_loss(double l_et, double l_cl, double lambda, double gamma, std::span<const Matrix* const> tables);

/// Tape handles for the pooling parameters that are in use.
struct PoolingVars {
    ag::Var expert_w, expert_b, head_w, head_b, temperature_raw;
};

/// Differentiable pooling over one entity's neighbor rows; returns N x 1.
ag::Var pool(Pooling kind, ag::Var logits, ag::Var features, const PoolingVars& vars);

} // namespace mclet::predictor
