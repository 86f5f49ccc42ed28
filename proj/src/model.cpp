#include "mclet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mclet::model {

std::vector<contrastive::PairSpec> default_pair_specs() {
    return {{entity_e2t, entity_e2c, contrastive::NodeKind::entity},
            {type_e2t, type_c2t, contrastive::NodeKind::type},
            {cluster_c2t, cluster_e2c, contrastive::NodeKind::cluster}};
}

std::pair<int, int> stream_source(Stream s) {
    switch (s) {
    case entity_e2t: return {0, 0};
    case type_e2t: return {0, 1};
    case cluster_c2t: return {1, 0};
    case type_c2t: return {1, 1};
    case entity_e2c: return {2, 0};
    case cluster_e2c: return {2, 1};
    }
    throw std::invalid_argument("bad stream");
}

namespace {

constexpr std::array<const char*, 3> kViewNames = {"e2t", "c2t", "e2c"};
constexpr std::array<const char*, kStreamCount> kStreamNames = {
    "entity_e2t", "type_e2t", "cluster_c2t", "type_c2t", "entity_e2c", "cluster_e2c"};

template <typename Params, typename Out>
void collect_tables(Params& p, Out& out) {
    auto push = [&out](std::string name, auto* table) {
        if (table->rows() > 0 || table->cols() > 0) out.push_back({std::move(name), table});
    };
    for (std::size_t v = 0; v < 3; ++v) {
        push(std::string("view.") + kViewNames[v] + ".left", &p.views[v].left);
        push(std::string("view.") + kViewNames[v] + ".right", &p.views[v].right);
    }
    for (std::size_t s = 0; s < kStreamCount; ++s) {
        const std::string base = std::string("proj.") + kStreamNames[s];
        push(base + ".w1", &p.projectors[s].w1);
        push(base + ".b1", &p.projectors[s].b1);
        push(base + ".w2", &p.projectors[s].w2);
        push(base + ".b2", &p.projectors[s].b2);
    }
    push("pred.relation", &p.predictor.relation);
    push("pred.w", &p.predictor.w);
    push("pred.b", &p.predictor.b);
    push("pool.expert_w", &p.predictor.expert_w);
    push("pool.expert_b", &p.predictor.expert_b);
    push("pool.head_w", &p.predictor.head_w);
    push("pool.head_b", &p.predictor.head_b);
    push("pool.temperature_raw", &p.predictor.temperature_raw);
}

Matrix uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    // Row-major fill keeps the draw order independent of Eigen's storage.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

void sort_unique(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Position of each id inside a sorted id list.
std::vector<int> positions(const std::vector<int>& ids, int universe) {
    std::vector<int> pos(static_cast<std::size_t>(universe), -1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        pos[static_cast<std::size_t>(ids[i])] = static_cast<int>(i);
    }
    return pos;
}

} // namespace

std::vector<NamedTable> ModelParameters::tables() {
    std::vector<NamedTable> out;
    collect_tables(*this, out);
    return out;
}

std::vector<ConstNamedTable> ModelParameters::tables() const {
    std::vector<ConstNamedTable> out;
    collect_tables(*this, out);
    return out;
}

ModelParameters ModelParameters::initialize(const TrainConfig& config, int entities, int relations, int types,
                                            int clusters, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const int d = config.dim;
    const int d2 = 2 * d;
    const double emb_bound = 1.0 / std::sqrt(static_cast<double>(d));
    const double wide_bound = 1.0 / std::sqrt(static_cast<double>(d2));

    ModelParameters p;
    const std::array<std::pair<int, int>, 3> sizes = {
        std::pair{entities, types}, std::pair{clusters, types}, std::pair{entities, clusters}};
    for (std::size_t v = 0; v < 3; ++v) {
        p.views[v].left = uniform(rng, sizes[v].first, d, emb_bound);
        p.views[v].right = uniform(rng, sizes[v].second, d, emb_bound);
    }
    for (auto& proj : p.projectors) {
        proj.w1 = uniform(rng, d, d, emb_bound);
        proj.b1 = Matrix::Zero(d, 1);
        proj.w2 = uniform(rng, d, d, emb_bound);
        proj.b2 = Matrix::Zero(d, 1);
    }
    auto& pr = p.predictor;
    pr.relation = uniform(rng, relations + 1, d2, wide_bound);
    pr.w = uniform(rng, types, d2, wide_bound);
    pr.b = Matrix::Zero(types, 1);
    const int heads = config.heads;
    switch (config.pooling) {
    case predictor::Pooling::pool:
        break;
    case predictor::Pooling::mha:
        pr.head_w = uniform(rng, heads, d2, wide_bound);
        pr.head_b = Matrix::Zero(heads, 1);
        break;
    case predictor::Pooling::mham:
        pr.expert_w = uniform(rng, config.experts, d2, wide_bound);
        pr.expert_b = Matrix::Zero(config.experts, 1);
        pr.head_w = uniform(rng, heads, config.experts, 1.0 / std::sqrt(static_cast<double>(config.experts)));
        pr.head_b = Matrix::Zero(heads, 1);
        break;
    }
    if (config.pooling != predictor::Pooling::pool) {
        // softplus(log(e - 1)) == 1
        pr.temperature_raw = Matrix::Constant(heads, 1, std::log(std::exp(1.0) - 1.0));
    }
    return p;
}

// --- TypingModel ---------------------------------------------------------------

TypingModel::TypingModel(kg::KnowledgeGraph graph, TrainConfig config)
    : graph_(std::move(graph)),
      config_(std::move(config)),
      views_(kg::build_views(graph_)),
      adjacency_{encoder::NormalizedAdjacency(views_.e2t), encoder::NormalizedAdjacency(views_.c2t),
                 encoder::NormalizedAdjacency(views_.e2c)},
      neighbors_(graph_),
      train_types_(kg::types_by_entity(graph_, {kg::Split::train})),
      entity_clusters_(static_cast<std::size_t>(graph_.entity_count())) {
    config_.validate();
    for (const auto& [e, c] : views_.e2c.edges) {
        entity_clusters_[static_cast<std::size_t>(e)].push_back(c);
    }
}

ModelParameters TypingModel::init_parameters() const {
    return ModelParameters::initialize(config_, graph_.entity_count(), graph_.relation_count(),
                                       graph_.type_count(), graph_.cluster_count(), config_.seed);
}

LossTerms TypingModel::batch_loss(ag::Tape& tape, const ModelParameters& params, std::span<const int> batch,
                                  std::mt19937_64& rng) const {
    LossTerms out;
    const auto tables = params.tables();
    for (const auto& t : tables) {
        out.leaves.push_back(tape.leaf(*t.table));
    }
    // Leaves are created in declared order; locate them by table address.
    auto leaf_of = [&](const Matrix& m) {
        for (std::size_t i = 0; i < tables.size(); ++i) {
            if (tables[i].table == &m) return out.leaves[i];
        }
        throw std::logic_error("table is not a registered parameter");
    };

    std::array<encoder::ViewReadout, 3> readouts;
    constexpr std::array<kg::ViewKind, 3> kinds = {kg::ViewKind::e2t, kg::ViewKind::c2t, kg::ViewKind::e2c};
    for (std::size_t v = 0; v < 3; ++v) {
        readouts[v] = encoder::encode_view(adjacency_[v], leaf_of(params.views[v].left),
                                           leaf_of(params.views[v].right), config_.layers,
                                           config_.include_final_layer, !config_.ablates(kinds[v]));
    }
    auto readout_of = [&readouts](Stream s) {
        const auto [v, side] = stream_source(s);
        return side == 0 ? readouts[static_cast<std::size_t>(v)].left : readouts[static_cast<std::size_t>(v)].right;
    };
    auto project_rows = [&](Stream s, const std::vector<int>& rows) {
        const auto& pp = params.projectors[static_cast<std::size_t>(s)];
        ag::Var x = ag::gather_rows(readout_of(s), rows);
        return contrastive::project(x, leaf_of(pp.w1), leaf_of(pp.b1), leaf_of(pp.w2), leaf_of(pp.b2));
    };

    // Rows touched by this batch.
    std::vector<int> batch_entities(batch.begin(), batch.end());
    sort_unique(batch_entities);
    std::vector<int> entity_rows = batch_entities;
    std::vector<int> type_rows;
    std::vector<int> cluster_rows;
    for (int e : batch_entities) {
        const auto& ns = neighbors_.of(e);
        for (const auto& [r, o] : ns.relational) entity_rows.push_back(o);
        type_rows.insert(type_rows.end(), ns.types.begin(), ns.types.end());
        const auto& cs = entity_clusters_[static_cast<std::size_t>(e)];
        cluster_rows.insert(cluster_rows.end(), cs.begin(), cs.end());
    }
    sort_unique(entity_rows);
    sort_unique(type_rows);
    sort_unique(cluster_rows);
    const auto entity_pos = positions(entity_rows, graph_.entity_count());
    const auto type_pos = positions(type_rows, graph_.type_count());

    ag::Var z_entity_e2t = project_rows(entity_e2t, entity_rows);
    ag::Var z_entity_e2c = project_rows(entity_e2c, entity_rows);
    ag::Var z_entity = ag::concat_cols(z_entity_e2t, z_entity_e2c);

    ag::Var z_type_e2t;
    ag::Var z_type_c2t;
    ag::Var stacked = z_entity;
    if (!type_rows.empty()) {
        z_type_e2t = project_rows(type_e2t, type_rows);
        z_type_c2t = project_rows(type_c2t, type_rows);
        stacked = ag::concat_rows(z_entity, ag::concat_cols(z_type_e2t, z_type_c2t));
    }
    const int type_offset = static_cast<int>(entity_rows.size());

    // One feature row per (entity, neighbor): z_i - r_i.
    std::vector<int> feature_rows;
    std::vector<int> relation_rows;
    struct Segment {
        int entity;
        int start;
        int count;
    };
    std::vector<Segment> segments;
    const int has_type = params.predictor.has_type_row();
    for (int e : batch) {
        const auto& ns = neighbors_.of(e);
        std::optional<int> masked;
        if (config_.mask_target_type && !ns.types.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, ns.types.size() - 1);
            masked = ns.types[pick(rng)];
        }
        const int start = static_cast<int>(feature_rows.size());
        for (const auto& [r, o] : ns.relational) {
            feature_rows.push_back(entity_pos[static_cast<std::size_t>(o)]);
            relation_rows.push_back(r);
        }
        for (int t : ns.types) {
            if (masked && *masked == t) continue;
            feature_rows.push_back(type_offset + type_pos[static_cast<std::size_t>(t)]);
            relation_rows.push_back(has_type);
        }
        const int count = static_cast<int>(feature_rows.size()) - start;
        if (count > 0) {
            segments.push_back({e, start, count});
        }
    }

    const auto& pr = params.predictor;
    ag::Var typing_sum;
    if (!segments.empty()) {
        ag::Var features = ag::sub(ag::gather_rows(stacked, feature_rows),
                                   ag::gather_rows(leaf_of(pr.relation), relation_rows));
        ag::Var logits = ag::linear(features, leaf_of(pr.w), leaf_of(pr.b));
        predictor::PoolingVars vars;
        if (config_.pooling == predictor::Pooling::mham) {
            vars.expert_w = leaf_of(pr.expert_w);
            vars.expert_b = leaf_of(pr.expert_b);
        }
        if (config_.pooling != predictor::Pooling::pool) {
            vars.head_w = leaf_of(pr.head_w);
            vars.head_b = leaf_of(pr.head_b);
            vars.temperature_raw = leaf_of(pr.temperature_raw);
        }
        for (const auto& seg : segments) {
            ag::Var p = predictor::pool(config_.pooling, ag::slice_rows(logits, seg.start, seg.count),
                                        ag::slice_rows(features, seg.start, seg.count), vars);
            out.probabilities.emplace_back(seg.entity, p);
            ag::Var term = ag::fna(p, train_types_[static_cast<std::size_t>(seg.entity)], config_.beta,
                                   predictor::kProbabilityClamp);
            typing_sum = typing_sum.valid() ? ag::add(typing_sum, term) : term;
        }
        out.scored_entities = segments.size();
        out.typing = ag::scale(typing_sum, 1.0 / static_cast<double>(segments.size()));
    } else {
        out.typing = tape.constant(Matrix::Zero(1, 1));
    }

    if (config_.lambda > 0.0) {
        std::vector<int> batch_pos;
        for (int e : batch_entities) batch_pos.push_back(entity_pos[static_cast<std::size_t>(e)]);
        std::vector<contrastive::Block> blocks;
        blocks.push_back({ag::gather_rows(z_entity_e2t, batch_pos), ag::gather_rows(z_entity_e2c, batch_pos)});
        if (!type_rows.empty()) {
            blocks.push_back({z_type_e2t, z_type_c2t});
        }
        if (!cluster_rows.empty()) {
            blocks.push_back({project_rows(cluster_c2t, cluster_rows), project_rows(cluster_e2c, cluster_rows)});
        }
        out.contrastive = contrastive::cl_loss(tape, blocks, config_.tau, config_.negative_cap, &rng);
    } else {
        out.contrastive = tape.constant(Matrix::Zero(1, 1));
    }

    ag::Var reg;
    for (const auto& leaf : out.leaves) {
        ag::Var sq = ag::sum_squares(leaf);
        reg = reg.valid() ? ag::add(reg, sq) : sq;
    }
    out.regularizer = reg;

    ag::Var total = out.typing;
    if (config_.lambda > 0.0) {
        total = ag::add(total, ag::scale(out.contrastive, config_.lambda));
    }
    if (config_.gamma > 0.0) {
        total = ag::add(total, ag::scale(out.regularizer, config_.gamma));
    }
    out.total = total;
    return out;
}

std::array<encoder::ViewEmbeddings, 3> TypingModel::encode(const ModelParameters& params) const {
    auto out = encoder::encode_all_views(params.views, views_, config_.layers, config_.include_final_layer);
    constexpr std::array<kg::ViewKind, 3> kinds = {kg::ViewKind::e2t, kg::ViewKind::c2t, kg::ViewKind::e2c};
    for (std::size_t v = 0; v < 3; ++v) {
        if (config_.ablates(kinds[v])) {
            out[v].readout_left = out[v].left0;
            out[v].readout_right = out[v].right0;
        }
    }
    return out;
}

predictor::FinalEmbeddings TypingModel::final_embeddings(const ModelParameters& params) const {
    const auto enc = encode(params);
    auto projected = [&](Stream s) {
        const auto [v, side] = stream_source(s);
        const auto& table = side == 0 ? enc[static_cast<std::size_t>(v)].readout_left
                                      : enc[static_cast<std::size_t>(v)].readout_right;
        return contrastive::project(table, params.projectors[static_cast<std::size_t>(s)]);
    };
    return predictor::concat_final(projected(entity_e2t), projected(entity_e2c), projected(type_e2t),
                                   projected(type_c2t));
}

std::optional<Vector> TypingModel::score(const ModelParameters& params, const predictor::FinalEmbeddings& emb,
                                         int entity) const {
    const auto nm = predictor::assemble(neighbors_.of(entity), emb, params.predictor);
    if (!nm) {
        return std::nullopt;
    }
    return predictor::pool(config_.pooling, *nm, params.predictor).p;
}

} // namespace mclet::model
