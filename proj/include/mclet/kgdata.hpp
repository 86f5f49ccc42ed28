#pragma once

// Knowledge-graph corpora: TSV ingestion, type clustering, the three
// uni-relational views (entity-type, cluster-type, entity-cluster), neighbor
// sets and the corpus mutators used by the robustness sweeps.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mclet::kg {

inline constexpr std::string_view kHasType = "has_type";
inline constexpr std::string_view kHasCluster = "has_cluster";
inline constexpr std::string_view kIsClusterOf = "is_cluster_of";

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Dense bidirectional label <-> index map.
class LabelIndex {
public:
    /// Returns the existing index or appends a new one.
    int add(std::string_view label);
    std::optional<int> find(std::string_view label) const;
    int index_of(std::string_view label) const;
    const std::string& label_of(int index) const;
    int size() const { return static_cast<int>(labels_.size()); }
    const std::vector<std::string>& labels() const { return labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

struct Vocabulary {
    LabelIndex entities;
    LabelIndex relations;
    LabelIndex types;
    LabelIndex clusters;
};

struct RawTriple {
    std::string head;
    std::string relation;
    std::string tail;
    bool operator==(const RawTriple&) const = default;
};

struct RawAssertion {
    std::string entity;
    std::string type;
    Split split = Split::train;
    bool operator==(const RawAssertion&) const = default;
};

struct Triple {
    int subject = 0;
    int relation = 0;
    int object = 0;
    auto operator<=>(const Triple&) const = default;
};

struct TypeAssertion {
    int entity = 0;
    int type = 0;
    Split split = Split::train;
    auto operator<=>(const TypeAssertion&) const = default;
};

struct KnowledgeGraph {
    Vocabulary vocab;
    std::vector<Triple> triples;
    std::vector<TypeAssertion> type_assertions;
    /// type id -> sorted cluster ids.
    std::vector<std::vector<int>> type_clusters;
    /// Types for which the cluster rule produced nothing.
    std::size_t unclustered_types = 0;

    int entity_count() const { return vocab.entities.size(); }
    int relation_count() const { return vocab.relations.size(); }
    int type_count() const { return vocab.types.size(); }
    int cluster_count() const { return vocab.clusters.size(); }
};

// --- parsing ---------------------------------------------------------------

/// Column positions of head/relation/tail, e.g. "hrt" (default) or "htr".
struct TripleColumns {
    int head = 0;
    int relation = 1;
    int tail = 2;
    static TripleColumns from_string(std::string_view order);
};

std::vector<RawTriple> parse_triples(const std::filesystem::path& path,
                                     TripleColumns columns = {});
std::vector<RawAssertion> parse_type_assertions(const std::filesystem::path& path, Split split);

// --- clustering ------------------------------------------------------------

/// Strict path prefixes of a hierarchical Freebase type label. The top-level
/// domain is emitted without its leading slash, so "/a/b/c" -> {"a", "/a/b"}.
/// Labels without at least two segments yield an empty set.
std::vector<std::string> extract_clusters_freebase(std::string_view type_label);

/// type label -> WordNet concepts it is aligned to.
using Alignment = std::map<std::string, std::set<std::string>, std::less<>>;

Alignment parse_alignment(const std::filesystem::path& path);
std::vector<std::string> extract_clusters_yago(const Alignment& alignment, std::string_view type_label);

using ClusterRule = std::function<std::vector<std::string>(std::string_view)>;

/// Interns the corpus into dense ids. Entities are numbered in first-appearance
/// order over triples then assertions. Duplicate triples/assertions are dropped.
/// Throws std::invalid_argument if a reserved relation occurs in `triples`.
KnowledgeGraph build_knowledge_graph(const std::vector<RawTriple>& triples,
                                     const std::vector<RawAssertion>& assertions,
                                     const ClusterRule& rule);

// --- views -----------------------------------------------------------------

enum class ViewKind : std::uint8_t { e2t = 0, c2t = 1, e2c = 2 };
std::string_view to_string(ViewKind kind);

/// Bipartite uni-relational graph. Left/right node kinds:
/// e2t = entity/type, c2t = cluster/type, e2c = entity/cluster.
struct ViewGraph {
    ViewKind kind = ViewKind::e2t;
    int left_count = 0;
    int right_count = 0;
    /// Sorted, duplicate-free (left, right) pairs.
    std::vector<std::pair<int, int>> edges;
    std::vector<int> left_degree;
    std::vector<int> right_degree;

    bool empty() const { return edges.empty(); }
};

ViewGraph make_view(ViewKind kind, int left_count, int right_count,
                    std::vector<std::pair<int, int>> edges);

struct Views {
    ViewGraph e2t;
    ViewGraph c2t;
    ViewGraph e2c;

    const ViewGraph& get(ViewKind kind) const;
};

/// Only train-split assertions feed the views.
Views build_views(const KnowledgeGraph& kg, const std::vector<std::vector<int>>& type_clusters);
inline Views build_views(const KnowledgeGraph& kg) { return build_views(kg, kg.type_clusters); }

// --- neighbors -------------------------------------------------------------

struct NeighborSet {
    int entity = 0;
    /// (relation, object), sorted.
    std::vector<std::pair<int, int>> relational;
    /// Train types, each standing for a (has_type, t) neighbor; sorted.
    std::vector<int> types;

    std::size_t size() const { return relational.size() + types.size(); }
};

/// Single-entity scan. Throws LookupError for an unknown entity id.
NeighborSet neighbor_set(const KnowledgeGraph& kg, int entity);

/// Precomputed neighbor sets for every entity.
class NeighborIndex {
public:
    explicit NeighborIndex(const KnowledgeGraph& kg);
    const NeighborSet& of(int entity) const;
    int entity_count() const { return static_cast<int>(sets_.size()); }

private:
    std::vector<NeighborSet> sets_;
};

/// Sorted type ids of `entity` per split, for every entity.
std::vector<std::vector<int>> types_by_entity(const KnowledgeGraph& kg, std::initializer_list<Split> splits);

// --- mutators ---------------------------------------------------------------

/// Keeps ceil((1 - rate) * |triples|) uniformly sampled triples (original order).
KnowledgeGraph drop_relational_neighbors(const KnowledgeGraph& kg, double rate, std::uint64_t seed);

/// Keeps ceil((1 - rate) * |relations in use|) relation ids and their triples.
KnowledgeGraph drop_relation_types(const KnowledgeGraph& kg, double rate, std::uint64_t seed);

/// Keeps the type assertions (all splits) of entities whose train type count
/// lies in [min_types, max_types]. Triples are untouched.
KnowledgeGraph filter_by_type_count(const KnowledgeGraph& kg, int min_types, int max_types);

// --- statistics and persistence -------------------------------------------

struct DatasetStats {
    int entities = 0;
    int relations = 0;
    int types = 0;
    int clusters = 0;
    std::size_t train_triples = 0;
    std::size_t train_tuples = 0;
    std::size_t valid_tuples = 0;
    std::size_t test_tuples = 0;
    std::size_t unclustered_types = 0;
};

DatasetStats compute_stats(const KnowledgeGraph& kg);
std::string format_stats(const DatasetStats& stats);

/// Hash over labels, triples and assertions; identifies a (mutated) corpus.
std::uint64_t corpus_fingerprint(const KnowledgeGraph& kg);

void save_cache(const KnowledgeGraph& kg, const std::filesystem::path& path);
KnowledgeGraph load_cache(const std::filesystem::path& path);

// --- dataset layouts ---------------------------------------------------------

enum class DatasetKind { fb15ket, yago43ket, custom };
DatasetKind parse_dataset_kind(std::string_view name);

struct DatasetLayout {
    std::string triples = "KG_train.txt";
    std::string train = "ET_train.txt";
    std::string valid = "ET_valid.txt";
    std::string test = "ET_test.txt";
    std::string alignment = "yago_wordnet_alignment.tsv";
    std::string triple_columns = "hrt";
};

/// Reads a dataset directory. fb15ket uses the prefix rule, yago43ket requires
/// the alignment file, custom uses the alignment when present and the prefix
/// rule otherwise.
KnowledgeGraph load_dataset(const std::filesystem::path& dir, DatasetKind kind,
                            const DatasetLayout& layout = {});

} // namespace mclet::kg
