#include "mclet/evaluation.hpp"

#include <cstdio>
#include <set>
#include <stdexcept>

namespace mclet::eval {

long filtered_rank(const Vector& scores, int target, std::span<const int> known_true) {
    const auto n = scores.size();
    if (target < 0 || target >= n) {
        throw std::invalid_argument("filtered_rank: target type out of range");
    }
    std::vector<char> skip(static_cast<std::size_t>(n), 0);
    for (int t : known_true) {
        if (t == target) {
            throw std::invalid_argument("filtered_rank: target is listed as known true");
        }
        if (t >= 0 && t < n) skip[static_cast<std::size_t>(t)] = 1;
    }
    const double s = scores(target);
    long rank = 1;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == target || skip[static_cast<std::size_t>(j)]) continue;
        if (scores(j) >= s) ++rank;
    }
    return rank;
}

Metrics aggregate(std::span<const long> ranks) {
    Metrics m;
    m.count = ranks.size();
    if (ranks.empty()) {
        return m;
    }
    for (long r : ranks) {
        if (r < 1) throw std::invalid_argument("aggregate: ranks start at 1");
        m.mr += static_cast<double>(r);
        m.mrr += 1.0 / static_cast<double>(r);
        m.hits1 += r <= 1 ? 1.0 : 0.0;
        m.hits3 += r <= 3 ? 1.0 : 0.0;
        m.hits10 += r <= 10 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(ranks.size());
    m.mr /= n;
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    return m;
}

std::optional<Vector> score_entity(const model::TypingModel& model, const model::ModelParameters& params, int entity) {
    const auto emb = model.final_embeddings(params);
    return model.score(params, emb, entity);
}

std::vector<std::optional<Vector>> score_entities(const model::TypingModel& model,
                                                  const model::ModelParameters& params,
                                                  std::span<const int> entities) {
    const auto emb = model.final_embeddings(params);
    std::vector<std::optional<Vector>> out;
    out.reserve(entities.size());
    for (int e : entities) {
        out.push_back(model.score(params, emb, e));
    }
    return out;
}

RankingReport evaluate(const model::TypingModel& model, const model::ModelParameters& params, kg::Split split) {
    const auto& kg = model.graph();
    const auto known = kg::types_by_entity(kg, {kg::Split::train, kg::Split::valid, kg::Split::test});
    const auto emb = model.final_embeddings(params);

    RankingReport report;
    report.split = split;
    std::vector<std::optional<Vector>> cache(static_cast<std::size_t>(kg.entity_count()));
    std::vector<char> scored(static_cast<std::size_t>(kg.entity_count()), 0);
    std::set<int> excluded;
    std::vector<long> ranks;
    std::vector<int> filter;
    for (const auto& a : kg.type_assertions) {
        if (a.split != split) continue;
        const auto idx = static_cast<std::size_t>(a.entity);
        if (!scored[idx]) {
            cache[idx] = model.score(params, emb, a.entity);
            scored[idx] = 1;
        }
        if (!cache[idx]) {
            excluded.insert(a.entity);
            ++report.excluded_tuples;
            continue;
        }
        filter.clear();
        for (int t : known[idx]) {
            if (t != a.type) filter.push_back(t);
        }
        const long rank = filtered_rank(*cache[idx], a.type, filter);
        report.per_tuple.push_back({a.entity, a.type, rank});
        ranks.push_back(rank);
    }
    report.excluded_entities = excluded.size();
    report.metrics = aggregate(ranks);
    return report;
}

namespace {

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, v);
    return buf;
}

} // namespace

std::string format_report(const RankingReport& report) {
    const auto& m = report.metrics;
    std::string out;
    out += "split: " + std::string(kg::to_string(report.split)) + "\n";
    out += "tuples: " + std::to_string(m.count) + "\n";
    out += "excluded: " + std::to_string(report.excluded_entities) + " entities without neighbors (" +
           std::to_string(report.excluded_tuples) + " tuples)\n";
    out += "MRR: " + fmt("%.4f", m.mrr) + "\n";
    out += "MR: " + fmt("%.2f", m.mr) + "\n";
    out += "Hits@1: " + fmt("%.4f", m.hits1) + "\n";
    out += "Hits@3: " + fmt("%.4f", m.hits3) + "\n";
    out += "Hits@10: " + fmt("%.4f", m.hits10) + "\n";
    return out;
}

std::string format_key_values(const RankingReport& report) {
    const auto& m = report.metrics;
    std::string out;
    out += "split=" + std::string(kg::to_string(report.split)) + "\n";
    out += "tuples=" + std::to_string(m.count) + "\n";
    out += "excluded_entities=" + std::to_string(report.excluded_entities) + "\n";
    out += "excluded_tuples=" + std::to_string(report.excluded_tuples) + "\n";
    out += "mr=" + fmt("%.17g", m.mr) + "\n";
    out += "mrr=" + fmt("%.17g", m.mrr) + "\n";
    out += "hits@1=" + fmt("%.17g", m.hits1) + "\n";
    out += "hits@3=" + fmt("%.17g", m.hits3) + "\n";
    out += "hits@10=" + fmt("%.17g", m.hits10) + "\n";
    return out;
}

} // namespace mclet::eval
