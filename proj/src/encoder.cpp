#include "mclet/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace mclet::encoder {

namespace {

void check_tables(const kg::ViewGraph& view, const Matrix& left, const Matrix& right) {
    if (left.rows() != view.left_count || right.rows() != view.right_count) {
        throw std::invalid_argument("encoder: table rows do not match view node counts");
    }
    if (left.cols() != right.cols()) {
        throw std::invalid_argument("encoder: left/right embedding widths differ");
    }
}

void check_layers(int num_layers) {
    if (num_layers < 1) {
        throw std::invalid_argument("encoder: layer count must be >= 1");
    }
}

} // namespace

NormalizedAdjacency::NormalizedAdjacency(const kg::ViewGraph& view) {
    std::vector<Eigen::Triplet<double>> fwd;
    std::vector<Eigen::Triplet<double>> bwd;
    fwd.reserve(view.edges.size());
    bwd.reserve(view.edges.size());
    for (const auto& [l, r] : view.edges) {
        const double w = 1.0 / std::sqrt(static_cast<double>(view.left_degree[static_cast<std::size_t>(l)]) *
                                         static_cast<double>(view.right_degree[static_cast<std::size_t>(r)]));
        fwd.emplace_back(l, r, w);
        bwd.emplace_back(r, l, w);
    }
    left_from_right.resize(view.left_count, view.right_count);
    left_from_right.setFromTriplets(fwd.begin(), fwd.end());
    right_from_left.resize(view.right_count, view.left_count);
    right_from_left.setFromTriplets(bwd.begin(), bwd.end());
}

std::pair<Matrix, Matrix> propagate_layer(const kg::ViewGraph& view, const Matrix& left_prev,
                                          const Matrix& right_prev) {
    check_tables(view, left_prev, right_prev);
    Matrix left = Matrix::Zero(left_prev.rows(), left_prev.cols());
    Matrix right = Matrix::Zero(right_prev.rows(), right_prev.cols());
    for (const auto& [l, r] : view.edges) {
        const double w = 1.0 / std::sqrt(static_cast<double>(view.left_degree[static_cast<std::size_t>(l)]) *
                                         static_cast<double>(view.right_degree[static_cast<std::size_t>(r)]));
        left.row(l) += w * right_prev.row(r);
        right.row(r) += w * left_prev.row(l);
    }
    return {std::move(left), std::move(right)};
}

Matrix readout(const std::vector<Matrix>& layers, int num_layers, bool include_final) {
    check_layers(num_layers);
    const std::size_t last = static_cast<std::size_t>(include_final ? num_layers : num_layers - 1);
    if (layers.size() <= last) {
        throw std::invalid_argument("readout: not enough layers computed");
    }
    Matrix out = layers[0];
    for (std::size_t i = 1; i <= last; ++i) {
        out += layers[i];
    }
    return out;
}

ViewEmbeddings encode_view(const kg::ViewGraph& view, const Matrix& left0, const Matrix& right0,
                           int num_layers, bool include_final) {
    check_tables(view, left0, right0);
    check_layers(num_layers);
    ViewEmbeddings out;
    out.left0 = left0;
    out.right0 = right0;
    out.layers_left.push_back(left0);
    out.layers_right.push_back(right0);
    for (int l = 1; l <= num_layers; ++l) {
        auto [nl, nr] = propagate_layer(view, out.layers_left.back(), out.layers_right.back());
        out.layers_left.push_back(std::move(nl));
        out.layers_right.push_back(std::move(nr));
    }
    out.readout_left = readout(out.layers_left, num_layers, include_final);
    out.readout_right = readout(out.layers_right, num_layers, include_final);
    return out;
}

std::array<ViewEmbeddings, 3> encode_all_views(const std::array<InitialTables, 3>& init,
                                               const kg::Views& views, int num_layers,
                                               bool include_final) {
    return {encode_view(views.e2t, init[0].left, init[0].right, num_layers, include_final),
            encode_view(views.c2t, init[1].left, init[1].right, num_layers, include_final),
            encode_view(views.e2c, init[2].left, init[2].right, num_layers, include_final)};
}

ViewReadout encode_view(const NormalizedAdjacency& adjacency, ag::Var left0, ag::Var right0,
                        int num_layers, bool include_final, bool propagate) {
    check_layers(num_layers);
    if (left0.rows() != adjacency.left_from_right.rows() || right0.rows() != adjacency.right_from_left.rows()) {
        throw std::invalid_argument("encoder: table rows do not match view node counts");
    }
    if (!propagate) {
        return {left0, right0};
    }
    const int last = include_final ? num_layers : num_layers - 1;
    ag::Var left = left0;
    ag::Var right = right0;
    ag::Var sum_left = left0;
    ag::Var sum_right = right0;
    for (int l = 1; l <= last; ++l) {
        ag::Var next_left = ag::spmm(adjacency.left_from_right, right);
        ag::Var next_right = ag::spmm(adjacency.right_from_left, left);
        left = next_left;
        right = next_right;
        sum_left = ag::add(sum_left, left);
        sum_right = ag::add(sum_right, right);
    }
    return {sum_left, sum_right};
}

} // namespace mclet::encoder
