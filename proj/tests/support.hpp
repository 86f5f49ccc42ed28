#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include "mclet/config.hpp"
#include "mclet/kgdata.hpp"
#include "mclet/model.hpp"

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testsupport {

using mclet::Matrix;
using mclet::Vector;

/// Six entities, four types in two clusters. Types: e0 {t0}, e1 {t1},
/// e2 {t0,t1}, e3 {t2}, e4 {t3}, e5 {t2,t3}; clusters A = {t0,t1}, B = {t2,t3}.
/// With `holdout`, e2's t1 and e5's t3 move to valid and test respectively.
mclet::kg::KnowledgeGraph toy_graph(bool holdout = false);

/// Small dimensions that keep full gradient checks cheap.
mclet::TrainConfig toy_config(mclet::predictor::Pooling pooling);

/// Random bipartite view with at most `max_nodes` nodes in total.
mclet::kg::ViewGraph random_view(std::mt19937_64& rng, int max_nodes);

/// D_L^{-1/2} A D_R^{-1/2} built densely; rows with zero degree stay zero.
Matrix dense_normalized(const mclet::kg::ViewGraph& view);

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound = 1.0);

/// Central differences of `f` with respect to every entry of `x`.
Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double eps = 1e-5);

/// ||a - n|| / max(||a||, ||n||, 1e-8).
double relative_error(const Matrix& analytic, const Matrix& numeric);

struct GradReport {
    double worst = 0.0;
    std::string table;
};

/// Finite-difference check of the full batch loss over every parameter table.
GradReport check_model_gradients(const mclet::model::TypingModel& model, mclet::model::ModelParameters& params,
                                 std::span<const int> batch);

/// Rank by sorting all candidates (score descending, target after equal
/// scores) and scanning for the target.
long sort_and_scan_rank(const Vector& scores, int target, const std::vector<int>& known_true);

} // namespace testsupport
