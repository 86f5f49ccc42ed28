#include "doctest.h"

#include "mclet/evaluation.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace mclet;
using namespace mclet::eval;

TEST_CASE("filtered_rank hand cases") {
    Vector s(4);
    s << 0.9, 0.8, 0.7, 0.6;
    CHECK(filtered_rank(s, 2, std::vector<int>{1}) == 2);
    CHECK(filtered_rank(s, 0, std::vector<int>{}) == 1);
    CHECK(filtered_rank(Vector::Constant(5, 0.3), 2, std::vector<int>{}) == 5);
    CHECK_THROWS_AS(filtered_rank(s, 1, std::vector<int>{1}), std::invalid_argument);
    CHECK_THROWS_AS(filtered_rank(s, 4, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("filtered_rank matches sort-and-scan and never exceeds the raw rank") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 100)(rng);
        Vector s(n);
        std::uniform_int_distribution<int> coarse(0, 9);
        for (int j = 0; j < n; ++j) s(j) = coarse(rng) / 10.0;
        const int target = std::uniform_int_distribution<int>(0, n - 1)(rng);
        std::vector<int> known;
        std::bernoulli_distribution pick(0.3);
        for (int j = 0; j < n; ++j) {
            if (j != target && pick(rng)) known.push_back(j);
        }
        const long r = filtered_rank(s, target, known);
        CHECK(r == testsupport::sort_and_scan_rank(s, target, known));
        CHECK(r <= filtered_rank(s, target, std::vector<int>{}));

        Vector extended(n + 1);
        extended << s, -1.0;
        CHECK(filtered_rank(extended, target, known) == r);
    }
}

TEST_CASE("aggregate") {
    const std::vector<long> ranks = {1, 2, 4};
    const auto m = aggregate(ranks);
    CHECK(m.mr == doctest::Approx(7.0 / 3.0).epsilon(1e-12));
    CHECK(m.mrr == doctest::Approx((1.0 + 0.5 + 0.25) / 3.0).epsilon(1e-12));
    CHECK(std::abs(m.mr - 2.3333) <= 1e-4);
    CHECK(std::abs(m.mrr - 0.58333) <= 1e-4);
    CHECK(std::abs(m.hits1 - 0.3333) <= 1e-4);
    CHECK(std::abs(m.hits3 - 0.6667) <= 1e-4);
    CHECK(m.hits10 == 1.0);

    const std::vector<long> ones = {1, 1, 1};
    const auto a = aggregate(ones);
    CHECK(a.mr == 1.0);
    CHECK(a.mrr == 1.0);
    CHECK(a.hits1 == 1.0);
    const std::vector<long> ten = {10};
    CHECK(aggregate(ten).hits10 == 1.0);
    CHECK(aggregate(ten).hits3 == 0.0);
    CHECK(aggregate(std::vector<long>{}).count == 0);
    CHECK_THROWS_AS(aggregate(std::vector<long>{0}), std::invalid_argument);
}

TEST_CASE("scoring is deterministic and batch equals per-entity") {
    const model::TypingModel m(testsupport::toy_graph(true), testsupport::toy_config(predictor::Pooling::mham));
    const auto params = m.init_parameters();
    const auto a = score_entity(m, params, 2);
    const auto b = score_entity(m, params, 2);
    REQUIRE(a);
    CHECK(*a == *b);
    const auto emb = m.final_embeddings(params);
    const auto nm = predictor::assemble(m.neighbors().of(2), emb, params.predictor);
    CHECK(*a == predictor::pool_mham(*nm, params.predictor).p);

    std::vector<int> all(6);
    std::iota(all.begin(), all.end(), 0);
    const auto batch = score_entities(m, params, all);
    for (int e = 0; e < 6; ++e) {
        CHECK(*batch[static_cast<std::size_t>(e)] == *score_entity(m, params, e));
    }
}

TEST_CASE("evaluate reports ranks, metrics and excluded entities") {
    // An isolated entity with only a test assertion cannot be scored.
    const auto extra = kg::build_knowledge_graph(
        {{"e0", "r0", "e1"}, {"e1", "r1", "e2"}, {"e2", "r0", "e3"}, {"e3", "r1", "e4"}, {"e4", "r0", "e5"}, {"e5", "r1", "e0"}},
        {{"e0", "/A/t0", kg::Split::train}, {"e1", "/A/t1", kg::Split::train}, {"e2", "/A/t0", kg::Split::train},
         {"e2", "/A/t1", kg::Split::valid}, {"e3", "/B/t2", kg::Split::train}, {"e4", "/B/t3", kg::Split::train},
         {"e5", "/B/t2", kg::Split::train}, {"e5", "/B/t3", kg::Split::test}, {"ghost", "/A/t0", kg::Split::test}},
        kg::extract_clusters_freebase);
    const model::TypingModel m(extra, testsupport::toy_config(predictor::Pooling::mha));
    const auto params = m.init_parameters();
    const auto report = evaluate(m, params, kg::Split::test);
    CHECK(report.per_tuple.size() == 1);
    CHECK(report.excluded_entities == 1);
    CHECK(report.excluded_tuples == 1);
    const auto& t = report.per_tuple[0];
    CHECK(m.graph().vocab.entities.label_of(t.entity) == "e5");
    const auto s = score_entity(m, params, t.entity);
    CHECK(t.rank == testsupport::sort_and_scan_rank(*s, t.type, {m.graph().vocab.types.index_of("/B/t2")}));
    CHECK(report.metrics.mrr == doctest::Approx(1.0 / static_cast<double>(t.rank)));
    CHECK(format_report(report).find("MRR: ") != std::string::npos);
    CHECK(format_key_values(report).find("excluded_entities=1\n") != std::string::npos);

    const auto train_report = evaluate(m, params, kg::Split::train);
    CHECK(train_report.per_tuple.size() == 6);
    CHECK(train_report.metrics.hits1 <= train_report.metrics.hits3);
    CHECK(train_report.metrics.hits3 <= train_report.metrics.hits10);
}
