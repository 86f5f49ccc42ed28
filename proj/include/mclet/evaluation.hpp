#pragma once

// Filtered-ranking evaluation: MR, MRR and Hits@{1,3,10} over the type
// assertions of one split.

#include "mclet/model.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mclet::eval {

/// 1 + number of candidate types (not known-true, not the target) scoring at
/// least as high as the target. Ties rank the target last. Throws
/// std::invalid_argument if the target is out of range or in `known_true`.
long filtered_rank(const Vector& scores, int target, std::span<const int> known_true);

struct Metrics {
    std::size_t count = 0;
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
};

/// All-zero metrics for an empty rank list.
Metrics aggregate(std::span<const long> ranks);

struct RankedTuple {
    int entity = 0;
    int type = 0;
    long rank = 0;
};

struct RankingReport {
    kg::Split split = kg::Split::test;
    std::vector<RankedTuple> per_tuple;
    Metrics metrics;
    /// Entities of the split with no neighbors, and their skipped tuples.
    std::size_t excluded_entities = 0;
    std::size_t excluded_tuples = 0;
};

/// Type probabilities of one entity with frozen parameters; nullopt when it
/// has no neighbors.
std::optional<Vector> score_entity(const model::TypingModel& model, const model::ModelParameters& params, int entity);

/// Same as score_entity for many entities, sharing one encoding pass.
std::vector<std::optional<Vector>> score_entities(const model::TypingModel& model,
                                                  const model::ModelParameters& params,
                                                  std::span<const int> entities);

RankingReport evaluate(const model::TypingModel& model, const model::ModelParameters& params, kg::Split split);

/// Human-readable summary.
std::string format_report(const RankingReport& report);
/// "key=value" lines: split, tuples, excluded_entities, excluded_tuples, mr, mrr, hits@1, hits@3, hits@10.
std::string format_key_values(const RankingReport& report);

} // namespace mclet::eval
