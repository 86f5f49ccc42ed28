#include "mclet/checkpoint.hpp"

#include "mclet/binary_io.hpp"

#include <fstream>

namespace mclet::ckpt {

namespace {

constexpr std::string_view kMagic = "MCLETCKP";
constexpr std::uint32_t kVersion = 1;

} // namespace

VocabFingerprints fingerprints(const kg::KnowledgeGraph& kg) {
    return {io::fingerprint(kg.vocab.entities.labels()), io::fingerprint(kg.vocab.relations.labels()),
            io::fingerprint(kg.vocab.types.labels()), io::fingerprint(kg.vocab.clusters.labels())};
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    io::write_header(os, kMagic, kVersion);
    io::write_string(os, checkpoint.config.to_json());
    io::write_u64(os, checkpoint.vocab.entities);
    io::write_u64(os, checkpoint.vocab.relations);
    io::write_u64(os, checkpoint.vocab.types);
    io::write_u64(os, checkpoint.vocab.clusters);
    io::write_u64(os, checkpoint.corpus);
    io::write_i32(os, checkpoint.epoch);
    io::write_f64(os, checkpoint.best_valid_mrr);
    const auto tables = checkpoint.params.tables();
    io::write_u32(os, static_cast<std::uint32_t>(tables.size()));
    for (const auto& t : tables) {
        io::write_string(os, t.name);
        io::write_matrix(os, *t.table);
    }
    if (!os) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    io::read_header(is, kMagic, kVersion);
    Checkpoint c;
    c.config = TrainConfig::from_json(io::read_string(is));
    c.vocab.entities = io::read_u64(is);
    c.vocab.relations = io::read_u64(is);
    c.vocab.types = io::read_u64(is);
    c.vocab.clusters = io::read_u64(is);
    c.corpus = io::read_u64(is);
    c.epoch = io::read_i32(is);
    c.best_valid_mrr = io::read_f64(is);

    // A minimal instance has the same table list as any corpus for this config.
    c.params = model::ModelParameters::initialize(c.config, 1, 1, 1, 1, 0);
    auto tables = c.params.tables();
    const std::uint32_t count = io::read_u32(is);
    if (count != tables.size()) {
        throw io::FormatError("checkpoint has " + std::to_string(count) + " tables, config expects " +
                              std::to_string(tables.size()));
    }
    for (auto& t : tables) {
        const std::string name = io::read_string(is);
        if (name != t.name) {
            throw io::FormatError("checkpoint table '" + name + "' where '" + t.name + "' was expected");
        }
        Matrix m = io::read_matrix(is);
        if (m.cols() != t.table->cols()) {
            throw io::FormatError("checkpoint table '" + name + "' has the wrong width");
        }
        *t.table = std::move(m);
    }
    return c;
}

void check_compatible(const Checkpoint& checkpoint, const kg::KnowledgeGraph& kg) {
    const auto fp = fingerprints(kg);
    auto require = [](bool ok, const char* what) {
        if (!ok) throw IncompatibleCheckpoint(std::string("checkpoint does not match corpus: ") + what);
    };
    require(fp.entities == checkpoint.vocab.entities, "entity vocabulary");
    require(fp.relations == checkpoint.vocab.relations, "relation vocabulary");
    require(fp.types == checkpoint.vocab.types, "type vocabulary");
    require(fp.clusters == checkpoint.vocab.clusters, "cluster vocabulary");
    const auto& p = checkpoint.params;
    require(p.views[0].left.rows() == kg.entity_count() && p.views[0].right.rows() == kg.type_count(),
            "e2t table sizes");
    require(p.views[1].left.rows() == kg.cluster_count() && p.views[1].right.rows() == kg.type_count(),
            "c2t table sizes");
    require(p.views[2].left.rows() == kg.entity_count() && p.views[2].right.rows() == kg.cluster_count(),
            "e2c table sizes");
    require(p.predictor.relation.rows() == kg.relation_count() + 1, "relation table size");
    require(p.predictor.w.rows() == kg.type_count(), "type classifier size");
}

} // namespace mclet::ckpt
