#pragma once

#include "mclet/kgdata.hpp"
#include "mclet/predictor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mclet {

/// Training hyperparameters. Defaults are the FB15kET settings; serialized
/// keys are d, lr, tau, L, H, M, beta, lambda, gamma, epochs, batch_size,
/// seed, pooling, view_ablation, include_final_layer, negative_cap, patience,
/// eval_every, mask_target_type.
struct TrainConfig {
    int dim = 100;
    double lr = 0.001;
    double tau = 0.6;
    int layers = 4;
    int heads = 5;
    int experts = 32;
    double beta = 4.0;
    double lambda = 0.001;
    double gamma = 1e-5;
    int epochs = 500;
    int batch_size = 128;
    std::uint64_t seed = 0;
    predictor::Pooling pooling = predictor::Pooling::mham;
    /// Views whose readout is replaced by their layer-0 tables.
    std::vector<kg::ViewKind> view_ablation;
    bool include_final_layer = false;
    std::size_t negative_cap = 0;
    /// Evaluations without validation MRR improvement before stopping.
    int patience = 20;
    int eval_every = 1;
    bool mask_target_type = false;

    static TrainConfig fb15ket();
    static TrainConfig yago43ket();

    bool ablates(kg::ViewKind kind) const;

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;

    std::string to_json() const;
    /// Unknown keys are rejected; absent keys keep the values of `base`.
    static TrainConfig from_json(const std::string& text, const TrainConfig& base);
    static TrainConfig from_json(const std::string& text);
};

} // namespace mclet
