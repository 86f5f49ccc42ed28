#pragma once

// Adam optimization of the joint objective over shuffled entity mini-batches
// with validation-MRR early stopping, plus top-k prediction.

#include "mclet/checkpoint.hpp"
#include "mclet/evaluation.hpp"
#include "mclet/model.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mclet::train {

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// One step; `grads[i]` pairs with `tables[i]`. Empty gradients count as zero.
    void step(const std::vector<model::NamedTable>& tables, const std::vector<Matrix>& grads);
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    int epoch = 0;
    /// Batch means of the joint loss and its parts.
    double loss = 0.0;
    double typing = 0.0;
    double contrastive = 0.0;
    double regularizer = 0.0;
    std::optional<double> valid_mrr;
};

struct TrainOptions {
    /// Called after every epoch; returning true stops training.
    std::function<bool(const EpochRecord&, const model::ModelParameters&)> on_epoch;
    /// Overrides config.epochs when set.
    std::optional<int> epochs;
};

struct TrainResult {
    ckpt::Checkpoint best;
    model::ModelParameters last;
    std::vector<EpochRecord> history;
    bool stopped_early = false;
};

/// Entities that carry at least one train type, in id order.
std::vector<int> training_entities(const model::TypingModel& model);

/// Trains from the config's seed. Without validation tuples the last epoch
/// is kept. Throws DivergenceError on a non-finite loss.
TrainResult train(const model::TypingModel& model, const TrainOptions& options = {});

struct Prediction {
    int type = 0;
    std::string label;
    double score = 0.0;
};

/// k highest-scored types of the entity, excluding its train types. Throws
/// kg::LookupError for an unknown label; empty if the entity has no neighbors.
std::vector<Prediction> predict(const model::TypingModel& model, const model::ModelParameters& params,
                                const std::string& entity_label, std::size_t k);

} // namespace mclet::train
