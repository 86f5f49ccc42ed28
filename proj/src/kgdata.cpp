#include "mclet/kgdata.hpp"

#include "mclet/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mclet::kg {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
    switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "valid") return Split::valid;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(ViewKind kind) {
    switch (kind) {
    case ViewKind::e2t: return "e2t";
    case ViewKind::c2t: return "c2t";
    case ViewKind::e2c: return "e2c";
    }
    return "?";
}

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

// --- LabelIndex ---------------------------------------------------------------

int LabelIndex::add(std::string_view label) {
    std::string key(label);
    auto it = index_.find(key);
    if (it != index_.end()) {
        return it->second;
    }
    const int id = static_cast<int>(labels_.size());
    labels_.push_back(key);
    index_.emplace(std::move(key), id);
    return id;
}

std::optional<int> LabelIndex::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

int LabelIndex::index_of(std::string_view label) const {
    if (auto id = find(label)) {
        return *id;
    }
    throw LookupError("unknown label '" + std::string(label) + "'");
}

const std::string& LabelIndex::label_of(int index) const {
    if (index < 0 || index >= size()) {
        throw LookupError("label index " + std::to_string(index) + " out of range");
    }
    return labels_[static_cast<std::size_t>(index)];
}

// --- parsing --------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

template <typename OnFields>
void for_each_record(const fs::path& path, std::size_t expected_fields, OnFields&& on_fields) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() != expected_fields) {
            throw ParseError(path.string(), line_no,
                             "expected " + std::to_string(expected_fields) + " tab-separated fields, got " +
                                 std::to_string(fields.size()));
        }
        for (auto f : fields) {
            if (f.empty()) {
                throw ParseError(path.string(), line_no, "empty field");
            }
        }
        on_fields(fields);
    }
}

} // namespace

TripleColumns TripleColumns::from_string(std::string_view order) {
    if (order.size() != 3) {
        throw std::invalid_argument("triple column order must be a permutation of 'hrt'");
    }
    TripleColumns c{-1, -1, -1};
    for (int i = 0; i < 3; ++i) {
        switch (order[static_cast<std::size_t>(i)]) {
        case 'h': c.head = i; break;
        case 'r': c.relation = i; break;
        case 't': c.tail = i; break;
        default: break;
        }
    }
    if (c.head < 0 || c.relation < 0 || c.tail < 0) {
        throw std::invalid_argument("triple column order must be a permutation of 'hrt', got '" +
                                    std::string(order) + "'");
    }
    return c;
}

std::vector<RawTriple> parse_triples(const fs::path& path, TripleColumns columns) {
    std::vector<RawTriple> out;
    for_each_record(path, 3, [&](const std::vector<std::string_view>& f) {
        out.push_back({std::string(f[static_cast<std::size_t>(columns.head)]),
                       std::string(f[static_cast<std::size_t>(columns.relation)]),
                       std::string(f[static_cast<std::size_t>(columns.tail)])});
    });
    return out;
}

std::vector<RawAssertion> parse_type_assertions(const fs::path& path, Split split) {
    std::vector<RawAssertion> out;
    for_each_record(path, 2, [&](const std::vector<std::string_view>& f) {
        out.push_back({std::string(f[0]), std::string(f[1]), split});
    });
    return out;
}

// --- clustering -------------------------------------------------------------------

std::vector<std::string> extract_clusters_freebase(std::string_view type_label) {
    if (type_label.size() < 2 || type_label.front() != '/') {
        return {};
    }
    std::vector<std::string_view> segments;
    std::size_t start = 1;
    while (start <= type_label.size()) {
        std::size_t slash = type_label.find('/', start);
        if (slash == std::string_view::npos) slash = type_label.size();
        segments.push_back(type_label.substr(start, slash - start));
        start = slash + 1;
    }
    if (segments.size() < 2 || std::any_of(segments.begin(), segments.end(),
                                           [](std::string_view s) { return s.empty(); })) {
        return {};
    }
    std::vector<std::string> out;
    out.emplace_back(segments.front());
    std::string prefix = "/" + std::string(segments.front());
    for (std::size_t k = 1; k + 1 < segments.size(); ++k) {
        prefix += "/";
        prefix += segments[k];
        out.push_back(prefix);
    }
    return out;
}

Alignment parse_alignment(const fs::path& path) {
    Alignment out;
    for_each_record(path, 2, [&](const std::vector<std::string_view>& f) {
        out[std::string(f[0])].insert(std::string(f[1]));
    });
    return out;
}

std::vector<std::string> extract_clusters_yago(const Alignment& alignment, std::string_view type_label) {
    auto it = alignment.find(type_label);
    if (it == alignment.end()) {
        return {};
    }
    return {it->second.begin(), it->second.end()};
}

// --- building ---------------------------------------------------------------------

namespace {

bool is_reserved_relation(std::string_view r) {
    return r == kHasType || r == kHasCluster || r == kIsClusterOf;
}

template <typename T>
void sort_unique(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

} // namespace

KnowledgeGraph build_knowledge_graph(const std::vector<RawTriple>& triples,
                                     const std::vector<RawAssertion>& assertions,
                                     const ClusterRule& rule) {
    KnowledgeGraph kg;
    kg.triples.reserve(triples.size());
    for (const auto& t : triples) {
        if (is_reserved_relation(t.relation)) {
            throw std::invalid_argument("reserved relation '" + t.relation + "' in relational triples");
        }
        const int s = kg.vocab.entities.add(t.head);
        const int r = kg.vocab.relations.add(t.relation);
        const int o = kg.vocab.entities.add(t.tail);
        kg.triples.push_back({s, r, o});
    }
    kg.type_assertions.reserve(assertions.size());
    for (const auto& a : assertions) {
        const int e = kg.vocab.entities.add(a.entity);
        const int t = kg.vocab.types.add(a.type);
        kg.type_assertions.push_back({e, t, a.split});
    }

    // Keep file order but drop repeats.
    {
        std::set<Triple> seen;
        std::erase_if(kg.triples, [&seen](const Triple& t) { return !seen.insert(t).second; });
    }
    {
        std::set<TypeAssertion> seen;
        std::erase_if(kg.type_assertions,
                      [&seen](const TypeAssertion& a) { return !seen.insert(a).second; });
    }

    kg.type_clusters.assign(static_cast<std::size_t>(kg.type_count()), {});
    for (int t = 0; t < kg.type_count(); ++t) {
        const auto labels = rule ? rule(kg.vocab.types.label_of(t)) : std::vector<std::string>{};
        auto& ids = kg.type_clusters[static_cast<std::size_t>(t)];
        for (const auto& c : labels) {
            ids.push_back(kg.vocab.clusters.add(c));
        }
        sort_unique(ids);
        if (ids.empty()) {
            ++kg.unclustered_types;
        }
    }
    return kg;
}

// --- views -------------------------------------------------------------------------

ViewGraph make_view(ViewKind kind, int left_count, int right_count, std::vector<std::pair<int, int>> edges) {
    ViewGraph v;
    v.kind = kind;
    v.left_count = left_count;
    v.right_count = right_count;
    sort_unique(edges);
    v.left_degree.assign(static_cast<std::size_t>(left_count), 0);
    v.right_degree.assign(static_cast<std::size_t>(right_count), 0);
    for (const auto& [l, r] : edges) {
        if (l < 0 || l >= left_count || r < 0 || r >= right_count) {
            throw std::invalid_argument("view edge (" + std::to_string(l) + ", " + std::to_string(r) +
                                        ") out of bounds");
        }
        ++v.left_degree[static_cast<std::size_t>(l)];
        ++v.right_degree[static_cast<std::size_t>(r)];
    }
    v.edges = std::move(edges);
    return v;
}

const ViewGraph& Views::get(ViewKind kind) const {
    switch (kind) {
    case ViewKind::e2t: return e2t;
    case ViewKind::c2t: return c2t;
    case ViewKind::e2c: return e2c;
    }
    throw std::invalid_argument("bad view kind");
}

Views build_views(const KnowledgeGraph& kg, const std::vector<std::vector<int>>& type_clusters) {
    if (type_clusters.size() != static_cast<std::size_t>(kg.type_count())) {
        throw std::invalid_argument("cluster table does not cover every type");
    }
    std::vector<std::pair<int, int>> e2t;
    for (const auto& a : kg.type_assertions) {
        if (a.split == Split::train) {
            e2t.emplace_back(a.entity, a.type);
        }
    }
    std::vector<std::pair<int, int>> c2t;
    for (int t = 0; t < kg.type_count(); ++t) {
        for (int c : type_clusters[static_cast<std::size_t>(t)]) {
            c2t.emplace_back(c, t);
        }
    }
    std::vector<std::pair<int, int>> e2c;
    for (const auto& [e, t] : e2t) {
        for (int c : type_clusters[static_cast<std::size_t>(t)]) {
            e2c.emplace_back(e, c);
        }
    }
    Views views;
    views.e2t = make_view(ViewKind::e2t, kg.entity_count(), kg.type_count(), std::move(e2t));
    views.c2t = make_view(ViewKind::c2t, kg.cluster_count(), kg.type_count(), std::move(c2t));
    views.e2c = make_view(ViewKind::e2c, kg.entity_count(), kg.cluster_count(), std::move(e2c));
    return views;
}

// --- neighbors --------------------------------------------------------------------

NeighborSet neighbor_set(const KnowledgeGraph& kg, int entity) {
    if (entity < 0 || entity >= kg.entity_count()) {
        throw LookupError("unknown entity id " + std::to_string(entity));
    }
    NeighborSet ns;
    ns.entity = entity;
    for (const auto& t : kg.triples) {
        if (t.subject == entity) {
            ns.relational.emplace_back(t.relation, t.object);
        }
    }
    for (const auto& a : kg.type_assertions) {
        if (a.entity == entity && a.split == Split::train) {
            ns.types.push_back(a.type);
        }
    }
    sort_unique(ns.relational);
    sort_unique(ns.types);
    return ns;
}

NeighborIndex::NeighborIndex(const KnowledgeGraph& kg) : sets_(static_cast<std::size_t>(kg.entity_count())) {
    for (int e = 0; e < kg.entity_count(); ++e) {
        sets_[static_cast<std::size_t>(e)].entity = e;
    }
    for (const auto& t : kg.triples) {
        sets_[static_cast<std::size_t>(t.subject)].relational.emplace_back(t.relation, t.object);
    }
    for (const auto& a : kg.type_assertions) {
        if (a.split == Split::train) {
            sets_[static_cast<std::size_t>(a.entity)].types.push_back(a.type);
        }
    }
    for (auto& s : sets_) {
        sort_unique(s.relational);
        sort_unique(s.types);
    }
}

const NeighborSet& NeighborIndex::of(int entity) const {
    if (entity < 0 || entity >= entity_count()) {
        throw LookupError("unknown entity id " + std::to_string(entity));
    }
    return sets_[static_cast<std::size_t>(entity)];
}

std::vector<std::vector<int>> types_by_entity(const KnowledgeGraph& kg, std::initializer_list<Split> splits) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(kg.entity_count()));
    for (const auto& a : kg.type_assertions) {
        if (std::find(splits.begin(), splits.end(), a.split) != splits.end()) {
            out[static_cast<std::size_t>(a.entity)].push_back(a.type);
        }
    }
    for (auto& v : out) {
        sort_unique(v);
    }
    return out;
}

// --- mutators -----------------------------------------------------------------------

namespace {

std::size_t kept_count(std::size_t n, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("drop rate must lie in [0, 1), got " + std::to_string(rate));
    }
    // The epsilon absorbs binary representation error such as 0.7 * 100.
    const double keep = std::ceil((1.0 - rate) * static_cast<double>(n) - 1e-9);
    return std::min(n, static_cast<std::size_t>(std::max(0.0, keep)));
}

} // namespace

KnowledgeGraph drop_relational_neighbors(const KnowledgeGraph& kg, double rate, std::uint64_t seed) {
    const std::size_t keep = kept_count(kg.triples.size(), rate);
    std::vector<std::size_t> order(kg.triples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(keep);
    std::sort(order.begin(), order.end());

    KnowledgeGraph out = kg;
    out.triples.clear();
    for (std::size_t i : order) {
        out.triples.push_back(kg.triples[i]);
    }
    return out;
}

KnowledgeGraph drop_relation_types(const KnowledgeGraph& kg, double rate, std::uint64_t seed) {
    std::vector<int> relations;
    for (const auto& t : kg.triples) {
        relations.push_back(t.relation);
    }
    sort_unique(relations);
    const std::size_t keep = kept_count(relations.size(), rate);
    std::mt19937_64 rng(seed);
    std::shuffle(relations.begin(), relations.end(), rng);
    std::vector<char> kept(static_cast<std::size_t>(kg.relation_count()), 0);
    for (std::size_t i = 0; i < keep; ++i) {
        kept[static_cast<std::size_t>(relations[i])] = 1;
    }
    KnowledgeGraph out = kg;
    std::erase_if(out.triples, [&kept](const Triple& t) { return !kept[static_cast<std::size_t>(t.relation)]; });
    return out;
}

KnowledgeGraph filter_by_type_count(const KnowledgeGraph& kg, int min_types, int max_types) {
    if (min_types < 0 || max_types < min_types) {
        throw std::invalid_argument("invalid type-count range");
    }
    const auto train_types = types_by_entity(kg, {Split::train});
    KnowledgeGraph out = kg;
    std::erase_if(out.type_assertions, [&](const TypeAssertion& a) {
        const int n = static_cast<int>(train_types[static_cast<std::size_t>(a.entity)].size());
        return n < min_types || n > max_types;
    });
    return out;
}

// --- statistics ---------------------------------------------------------------------

DatasetStats compute_stats(const KnowledgeGraph& kg) {
    DatasetStats s;
    s.entities = kg.entity_count();
    s.relations = kg.relation_count();
    s.types = kg.type_count();
    s.clusters = kg.cluster_count();
    s.train_triples = kg.triples.size();
    for (const auto& a : kg.type_assertions) {
        switch (a.split) {
        case Split::train: ++s.train_tuples; break;
        case Split::valid: ++s.valid_tuples; break;
        case Split::test: ++s.test_tuples; break;
        }
    }
    s.unclustered_types = kg.unclustered_types;
    return s;
}

std::string format_stats(const DatasetStats& s) {
    std::ostringstream os;
    os << "entities: " << s.entities << "\n"
       << "relations: " << s.relations << "\n"
       << "types: " << s.types << "\n"
       << "clusters: " << s.clusters << "\n"
       << "train_triples: " << s.train_triples << "\n"
       << "train_tuples: " << s.train_tuples << "\n"
       << "valid_tuples: " << s.valid_tuples << "\n"
       << "test_tuples: " << s.test_tuples << "\n"
       << "unclustered_types: " << s.unclustered_types << "\n";
    return os.str();
}

// --- persistence ---------------------------------------------------------------------

namespace {

constexpr std::string_view kCacheMagic = "MCLETKG";
constexpr std::uint32_t kCacheVersion = 1;

void write_labels(std::ostream& os, const LabelIndex& idx) {
    io::write_u64(os, idx.labels().size());
    for (const auto& l : idx.labels()) {
        io::write_string(os, l);
    }
}

void read_labels(std::istream& is, LabelIndex& idx) {
    const std::uint64_t n = io::read_u64(is);
    for (std::uint64_t i = 0; i < n; ++i) {
        idx.add(io::read_string(is));
    }
    if (static_cast<std::uint64_t>(idx.size()) != n) {
        throw io::FormatError("duplicate label in cached vocabulary");
    }
}

void write_body(std::ostream& os, const KnowledgeGraph& kg) {
    write_labels(os, kg.vocab.entities);
    write_labels(os, kg.vocab.relations);
    write_labels(os, kg.vocab.types);
    write_labels(os, kg.vocab.clusters);
    io::write_u64(os, kg.triples.size());
    for (const auto& t : kg.triples) {
        io::write_i32(os, t.subject);
        io::write_i32(os, t.relation);
        io::write_i32(os, t.object);
    }
    io::write_u64(os, kg.type_assertions.size());
    for (const auto& a : kg.type_assertions) {
        io::write_i32(os, a.entity);
        io::write_i32(os, a.type);
        io::write_i32(os, static_cast<std::int32_t>(a.split));
    }
    io::write_u64(os, kg.type_clusters.size());
    for (const auto& c : kg.type_clusters) {
        io::write_ints(os, c);
    }
    io::write_u64(os, kg.unclustered_types);
}

int checked_id(std::int32_t v, int bound) {
    if (v < 0 || v >= bound) {
        throw io::FormatError("id out of range in dataset cache");
    }
    return v;
}

} // namespace

std::uint64_t corpus_fingerprint(const KnowledgeGraph& kg) {
    std::ostringstream os(std::ios::binary);
    write_body(os, kg);
    return io::fingerprint({os.str()});
}

void save_cache(const KnowledgeGraph& kg, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    io::write_header(os, kCacheMagic, kCacheVersion);
    write_body(os, kg);
}

KnowledgeGraph load_cache(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    io::read_header(is, kCacheMagic, kCacheVersion);
    KnowledgeGraph kg;
    read_labels(is, kg.vocab.entities);
    read_labels(is, kg.vocab.relations);
    read_labels(is, kg.vocab.types);
    read_labels(is, kg.vocab.clusters);
    const int ne = kg.entity_count();
    const int nr = kg.relation_count();
    const int nt = kg.type_count();
    const std::uint64_t n_triples = io::read_u64(is);
    for (std::uint64_t i = 0; i < n_triples; ++i) {
        const int s = checked_id(io::read_i32(is), ne);
        const int r = checked_id(io::read_i32(is), nr);
        const int o = checked_id(io::read_i32(is), ne);
        kg.triples.push_back({s, r, o});
    }
    const std::uint64_t n_assert = io::read_u64(is);
    for (std::uint64_t i = 0; i < n_assert; ++i) {
        const int e = checked_id(io::read_i32(is), ne);
        const int t = checked_id(io::read_i32(is), nt);
        const int sp = checked_id(io::read_i32(is), 3);
        kg.type_assertions.push_back({e, t, static_cast<Split>(sp)});
    }
    const std::uint64_t n_tc = io::read_u64(is);
    if (n_tc != static_cast<std::uint64_t>(nt)) {
        throw io::FormatError("cluster table size does not match type vocabulary");
    }
    for (std::uint64_t i = 0; i < n_tc; ++i) {
        auto ids = io::read_ints(is);
        for (int c : ids) checked_id(c, kg.cluster_count());
        kg.type_clusters.push_back(std::move(ids));
    }
    kg.unclustered_types = io::read_u64(is);
    return kg;
}

// --- dataset layouts ------------------------------------------------------------------

DatasetKind parse_dataset_kind(std::string_view name) {
    if (name == "fb15ket") return DatasetKind::fb15ket;
    if (name == "yago43ket") return DatasetKind::yago43ket;
    if (name == "custom") return DatasetKind::custom;
    throw std::invalid_argument("unknown dataset '" + std::string(name) + "'");
}

KnowledgeGraph load_dataset(const fs::path& dir, DatasetKind kind, const DatasetLayout& layout) {
    const auto triples = parse_triples(dir / layout.triples, TripleColumns::from_string(layout.triple_columns));
    std::vector<RawAssertion> assertions = parse_type_assertions(dir / layout.train, Split::train);
    for (auto [file, split] : {std::pair{layout.valid, Split::valid}, std::pair{layout.test, Split::test}}) {
        const fs::path p = dir / file;
        if (kind == DatasetKind::custom && !fs::exists(p)) {
            continue;
        }
        auto part = parse_type_assertions(p, split);
        assertions.insert(assertions.end(), part.begin(), part.end());
    }

    const fs::path align_path = dir / layout.alignment;
    const bool use_alignment =
        kind == DatasetKind::yago43ket || (kind == DatasetKind::custom && fs::exists(align_path));
    if (use_alignment) {
        Alignment alignment = parse_alignment(align_path);
        return build_knowledge_graph(triples, assertions, [&alignment](std::string_view t) {
            return extract_clusters_yago(alignment, t);
        });
    }
    return build_knowledge_graph(triples, assertions, extract_clusters_freebase);
}

} // namespace mclet::kg
