#pragma once

// Ablation and sweep drivers. Each row retrains from the config's seed on a
// (possibly mutated) corpus and evaluates one split.

#include "mclet/config.hpp"
#include "mclet/evaluation.hpp"
#include "mclet/kgdata.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mclet::ablation {

struct MetricRow {
    std::string setting;
    eval::Metrics metrics;
    /// Fingerprint of the corpus this row was trained and evaluated on.
    std::uint64_t corpus = 0;
};

struct SweepOptions {
    kg::Split split = kg::Split::test;
    /// Called as each row completes.
    std::function<void(const MetricRow&)> on_row;
};

/// Trains on `kg` with `config` and evaluates `split`.
MetricRow run_setting(const std::string& setting, const TrainConfig& config, const kg::KnowledgeGraph& kg,
                      kg::Split split);

/// Rows: w/o e2t, w/o c2t, w/o e2c, w/o all, full.
std::vector<MetricRow> run_view_ablation(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                         const SweepOptions& options = {});

/// One row per layer count. With `filter_1_4` only entities with 1 to 4
/// train types keep their type assertions.
std::vector<MetricRow> run_layer_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                       std::span<const int> layers, bool filter_1_4,
                                       const SweepOptions& options = {});

enum class DropMode { neighbors, relation_types };

/// One row per rate in [0, 1); the corpus is mutated with the config seed.
std::vector<MetricRow> run_dropping_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg, DropMode mode,
                                          std::span<const double> rates, const SweepOptions& options = {});

std::vector<MetricRow> run_head_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                      std::span<const int> heads, const SweepOptions& options = {});
std::vector<MetricRow> run_lambda_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                        std::span<const double> lambdas, const SweepOptions& options = {});
std::vector<MetricRow> run_tau_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                     std::span<const double> taus, const SweepOptions& options = {});
std::vector<MetricRow> run_pooling_sweep(const TrainConfig& config, const kg::KnowledgeGraph& kg,
                                         const SweepOptions& options = {});

/// Tab-separated header plus one line per row:
/// setting, MRR, MR, Hits@1, Hits@3, Hits@10, corpus.
std::string format_rows(std::span<const MetricRow> rows);

} // namespace mclet::ablation
