#pragma once

// Parameter tables and the end-to-end forward pass: view encoders ->
// per-stream projectors -> concatenated final embeddings -> neighbor
// prediction and pooling, plus the joint training objective.

#include "mclet/config.hpp"
#include "mclet/contrastive.hpp"
#include "mclet/encoder.hpp"
#include "mclet/kgdata.hpp"
#include "mclet/predictor.hpp"

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mclet::model {

/// The six projected view streams, one projector each.
enum Stream : int {
    entity_e2t = 0,
    type_e2t = 1,
    cluster_c2t = 2,
    type_c2t = 3,
    entity_e2c = 4,
    cluster_e2c = 5,
};
inline constexpr int kStreamCount = 6;

/// Entities across (e2t, e2c), types across (e2t, c2t), clusters across (c2t, e2c).
std::vector<contrastive::PairSpec> default_pair_specs();

struct NamedTable {
    std::string name;
    Matrix* table;
};

struct ConstNamedTable {
    std::string name;
    const Matrix* table;
};

struct ModelParameters {
    std::array<encoder::InitialTables, 3> views;  // e2t, c2t, e2c
    std::array<contrastive::ProjectionParams, kStreamCount> projectors;
    predictor::PredictorParams predictor;

    /// Every trainable table in use, in declared (checkpoint) order.
    std::vector<NamedTable> tables();
    std::vector<ConstNamedTable> tables() const;

    /// Random initialization for the given corpus sizes. Embeddings and
    /// weights are U(-1/sqrt(fan), 1/sqrt(fan)), biases zero, temperatures 1.
    static ModelParameters initialize(const TrainConfig& config, int entities, int relations, int types,
                                      int clusters, std::uint64_t seed);
};

/// Rows of a readout table that a projector consumes.
std::pair<int, int> stream_source(Stream s);  // (view index, 0 = left / 1 = right)

struct LossTerms {
    ag::Var total;
    ag::Var typing;
    ag::Var contrastive;
    ag::Var regularizer;
    /// Leaves aligned with ModelParameters::tables().
    std::vector<ag::Var> leaves;
    std::size_t scored_entities = 0;
    /// Per scored entity (in batch order): entity id and its p vector node.
    std::vector<std::pair<int, ag::Var>> probabilities;
};

/// Corpus-derived structures shared by training and evaluation.
class TypingModel {
public:
    TypingModel(kg::KnowledgeGraph graph, TrainConfig config);

    const kg::KnowledgeGraph& graph() const { return graph_; }
    const TrainConfig& config() const { return config_; }
    const kg::Views& views() const { return views_; }
    const kg::NeighborIndex& neighbors() const { return neighbors_; }
    const std::vector<std::vector<int>>& train_types() const { return train_types_; }

    ModelParameters init_parameters() const;

    /// Joint loss over a batch of entity ids on `tape`. Entities with no
    /// neighbors contribute nothing to the typing term.
    LossTerms batch_loss(ag::Tape& tape, const ModelParameters& params, std::span<const int> batch,
                         std::mt19937_64& rng) const;

    /// Readouts of every view (ablated views keep their layer-0 tables).
    std::array<encoder::ViewEmbeddings, 3> encode(const ModelParameters& params) const;

    /// Final entity/type tables for every node, computed without a tape.
    predictor::FinalEmbeddings final_embeddings(const ModelParameters& params) const;

    /// Type probabilities for one entity; nullopt if it has no neighbors.
    std::optional<Vector> score(const ModelParameters& params, const predictor::FinalEmbeddings& emb,
                                int entity) const;

private:
    kg::KnowledgeGraph graph_;
    TrainConfig config_;
    kg::Views views_;
    std::array<encoder::NormalizedAdjacency, 3> adjacency_;
    kg::NeighborIndex neighbors_;
    std::vector<std::vector<int>> train_types_;
    std::vector<std::vector<int>> entity_clusters_;
};

} // namespace mclet::model
