#include "mclet/ablation.hpp"

#include "mclet/trainer.hpp"

#include <cmath>
#include <cstdio>

namespace mclet::ablation {

namespace {

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

template <typename T, typename Apply>
std::vector<MetricRow> sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg, std::span<const T> values,
                             const SweepOptions& options, const std::string& prefix, Apply apply) {
    std::vector<MetricRow> rows;
    for (const T& v : values) {
        TrainConfig c = config;
        apply(c, v);
        rows.push_back(run_setting(prefix + number(static_cast<double>(v)), c, kg, options.split));
        if (options.on_row) options.on_row(rows.back());
    }
    return rows;
}

} // namespace

MetricRow run_setting(const std::string& setting, const TrainConfig& config, const kg::KnowledgeGraph& kg,
                      kg::Split split) {
    const model::TypingModel model(kg, config);
    const auto result = train::train(model);
    MetricRow row;
    row.setting = setting;
    row.metrics = eval::evaluate(model, result.best.params, split).metrics;
    row.corpus = kg::corpus_fingerprint(kg);
    return row;
}

std::vector<MetricRow> run_view_ablation(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                         const SweepOptions& options) {
    using kg::ViewKind;
    const std::vector<std::pair<std::string, std::vector<ViewKind>>> settings = {
        {"w/o e2t", {ViewKind::e2t}},
        {"w/o c2t", {ViewKind::c2t}},
        {"w/o e2c", {ViewKind::e2c}},
        {"w/o all", {ViewKind::e2t, ViewKind::c2t, ViewKind::e2c}},
        {"full", {}},
    };
    std::vector<MetricRow> rows;
    for (const auto& [name, ablated] : settings) {
        TrainConfig c = config;
        c.view_ablation = ablated;
        rows.push_back(run_setting(name, c, kg, options.split));
        if (options.on_row) options.on_row(rows.back());
    }
    return rows;
}

std::vector<MetricRow> run_layer_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                       std::span<const int> layers, bool filter_1_4, const SweepOptions& options) {
    if (!filter_1_4) {
        return sweep(config, kg, layers, options, "L=", [](TrainConfig& c, int l) { c.layers = l; });
    }
    const auto filtered = kg::filter_by_type_count(kg, 1, 4);
    return sweep(config, filtered, layers, options, "{1~4} L=", [](TrainConfig& c, int l) { c.layers = l; });
}

std::vector<MetricRow> run_dropping_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg, DropMode mode,
                                          std::span<const double> rates, const SweepOptions& options) {
    std::vector<MetricRow> rows;
    for (double rate : rates) {
        const auto mutated = mode == DropMode::neighbors ? kg::drop_relational_neighbors(kg, rate, config.seed)
                                                         : kg::drop_relation_types(kg, rate, config.seed);
        const std::string label = (mode == DropMode::neighbors ? "drop neighbors " : "drop relations ") +
                                  number(std::round(rate * 1000.0) / 10.0) + "%";
        rows.push_back(run_setting(label, config, mutated, options.split));
        if (options.on_row) options.on_row(rows.back());
    }
    return rows;
}

std::vector<MetricRow> run_head_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                      std::span<const int> heads, const SweepOptions& options) {
    return sweep(config, kg, heads, options, "H=", [](TrainConfig& c, int h) { c.heads = h; });
}

std::vector<MetricRow> run_lambda_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                        std::span<const double> lambdas, const SweepOptions& options) {
    return sweep(config, kg, lambdas, options, "lambda=", [](TrainConfig& c, double l) { c.lambda = l; });
}

std::vector<MetricRow> run_tau_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                     std::span<const double> taus, const SweepOptions& options) {
    return sweep(config, kg, taus, options, "tau=", [](TrainConfig& c, double t) { c.tau = t; });
}

std::vector<MetricRow> run_pooling_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                         const SweepOptions& options) {
    std::vector<MetricRow> rows;
    for (auto kind : {predictor::Pooling::pool, predictor::Pooling::mha, predictor::Pooling::mham}) {
        TrainConfig c = config;
        c.pooling = kind;
        rows.push_back(run_setting(std::string(predictor::to_string(kind)), c, kg, options.split));
        if (options.on_row) options.on_row(rows.back());
    }
    return rows;
}

std::string format_rows(std::span<const MetricRow> rows) {
    std::string out = "setting\tMRR\tMR\tHits@1\tHits@3\tHits@10\tcorpus\n";
    char buf[256];
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        std::snprintf(buf, sizeof(buf), "\t%.3f\t%.1f\t%.3f\t%.3f\t%.3f\t%016llx\n", m.mrr, m.mr, m.hits1, m.hits3,
                      m.hits10, static_cast<unsigned long long>(r.corpus));
        out += r.setting + buf;
    }
    return out;
}

} // namespace mclet::ablation
