#pragma once

// LightGCN propagation over a bipartite view and layer-sum readout.
//
// One layer maps (left, right) tables to
//   left'[e]  = sum_{t in M_e} right[t] / sqrt(|M_e| |M_t|)
//   right'[t] = sum_{e in M_t} left[e]  / sqrt(|M_t| |M_e|)
// with no weights, no self loops and no nonlinearity.

#include "mclet/autograd.hpp"
#include "mclet/kgdata.hpp"

#include <array>
#include <utility>
#include <vector>

namespace mclet::encoder {

/// Symmetrically normalized biadjacency D_L^{-1/2} A D_R^{-1/2} and its transpose.
struct NormalizedAdjacency {
    SparseMatrix left_from_right;  // left_count x right_count
    SparseMatrix right_from_left;  // right_count x left_count

    explicit NormalizedAdjacency(const kg::ViewGraph& view);
};

/// One propagation step straight off the edge list. Isolated nodes map to zero.
/// Throws std::invalid_argument on table/view shape mismatch.
std::pair<Matrix, Matrix> propagate_layer(const kg::ViewGraph& view, const Matrix& left_prev,
                                          const Matrix& right_prev);

/// Sum of layers 0..L-1, or 0..L when include_final is set.
Matrix readout(const std::vector<Matrix>& layers, int num_layers, bool include_final);

struct ViewEmbeddings {
    Matrix left0;
    Matrix right0;
    std::vector<Matrix> layers_left;   // l = 0..L
    std::vector<Matrix> layers_right;
    Matrix readout_left;
    Matrix readout_right;
};

ViewEmbeddings encode_view(const kg::ViewGraph& view, const Matrix& left0, const Matrix& right0,
                           int num_layers, bool include_final);

struct InitialTables {
    Matrix left;
    Matrix right;
};

/// Readouts of the three views, in e2t, c2t, e2c order. Each view has its
/// own initial tables; nothing is shared.
std::array<ViewEmbeddings, 3> encode_all_views(const std::array<InitialTables, 3>& init,
                                               const kg::Views& views, int num_layers,
                                               bool include_final);

struct ViewReadout {
    ag::Var left;
    ag::Var right;
};

/// Differentiable readout on a tape. With `propagate` off the readout is the
/// layer-0 tables themselves (view ablation).
ViewReadout encode_view(const NormalizedAdjacency& adjacency, ag::Var left0, ag::Var right0,
                        int num_layers, bool include_final, bool propagate = true);

} // namespace mclet::encoder
