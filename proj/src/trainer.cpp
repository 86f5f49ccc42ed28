#include "mclet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mclet::train {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<model::NamedTable>& tables, const std::vector<Matrix>& grads) {
    if (grads.size() != tables.size()) {
        throw std::invalid_argument("Adam: one gradient per table expected");
    }
    if (m_.empty()) {
        for (const auto& t : tables) {
            m_.push_back(Matrix::Zero(t.table->rows(), t.table->cols()));
            v_.push_back(Matrix::Zero(t.table->rows(), t.table->cols()));
        }
    }
    if (m_.size() != tables.size()) {
        throw std::invalid_argument("Adam: table list changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < tables.size(); ++i) {
        Matrix& w = *tables[i].table;
        if (grads[i].size() == 0) {
            m_[i] *= beta1_;
            v_[i] *= beta2_;
        } else {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
        }
        w.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

std::vector<int> training_entities(const model::TypingModel& model) {
    std::vector<int> out;
    const auto& tt = model.train_types();
    for (std::size_t e = 0; e < tt.size(); ++e) {
        if (!tt[e].empty()) out.push_back(static_cast<int>(e));
    }
    return out;
}

namespace {

bool has_split(const kg::KnowledgeGraph& kg, kg::Split split) {
    return std::any_of(kg.type_assertions.begin(), kg.type_assertions.end(),
                       [split](const kg::TypeAssertion& a) { return a.split == split; });
}

} // namespace

TrainResult train(const model::TypingModel& model, const TrainOptions& options) {
    const auto& cfg = model.config();
    const int epochs = options.epochs.value_or(cfg.epochs);
    std::mt19937_64 rng(cfg.seed);

    TrainResult result;
    result.last = model.init_parameters();
    result.best.config = cfg;
    result.best.vocab = ckpt::fingerprints(model.graph());
    result.best.corpus = kg::corpus_fingerprint(model.graph());
    result.best.params = result.last;

    const bool validate = has_split(model.graph(), kg::Split::valid);
    std::vector<int> order = training_entities(model);
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    Adam adam(cfg.lr);
    double best_mrr = -1.0;
    int stale = 0;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t count = std::min(batch_size, order.size() - start);
            const std::span<const int> batch(order.data() + start, count);
            ag::Tape tape;
            auto terms = model.batch_loss(tape, result.last, batch, rng);
            const double loss = terms.total.scalar();
            if (!std::isfinite(loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batches + 1) + " (typing " +
                                      std::to_string(terms.typing.scalar()) + ", contrastive " +
                                      std::to_string(terms.contrastive.scalar()) + ")");
            }
            tape.backward(terms.total);
            std::vector<Matrix> grads;
            grads.reserve(terms.leaves.size());
            for (const auto& leaf : terms.leaves) grads.push_back(tape.grad(leaf));
            adam.step(result.last.tables(), grads);

            rec.loss += loss;
            rec.typing += terms.typing.scalar();
            rec.contrastive += terms.contrastive.scalar();
            rec.regularizer += terms.regularizer.scalar();
            ++batches;
        }
        if (batches > 0) {
            const double n = static_cast<double>(batches);
            rec.loss /= n;
            rec.typing /= n;
            rec.contrastive /= n;
            rec.regularizer /= n;
        }

        bool stop = false;
        if (validate && epoch % cfg.eval_every == 0) {
            rec.valid_mrr = eval::evaluate(model, result.last, kg::Split::valid).metrics.mrr;
            if (*rec.valid_mrr > best_mrr) {
                best_mrr = *rec.valid_mrr;
                stale = 0;
                result.best.params = result.last;
                result.best.epoch = epoch;
                result.best.best_valid_mrr = best_mrr;
            } else if (++stale >= cfg.patience) {
                stop = true;
                result.stopped_early = true;
            }
        }
        if (!validate) {
            result.best.epoch = epoch;
        }
        result.history.push_back(rec);
        if (options.on_epoch && options.on_epoch(rec, result.last)) {
            stop = true;
            result.stopped_early = true;
        }
        if (stop) break;
    }
    if (!validate) {
        result.best.params = result.last;
    }
    return result;
}

std::vector<Prediction> predict(const model::TypingModel& model, const model::ModelParameters& params,
                                const std::string& entity_label, std::size_t k) {
    const auto& kg = model.graph();
    const int e = kg.vocab.entities.index_of(entity_label);
    const auto scores = eval::score_entity(model, params, e);
    if (!scores) {
        return {};
    }
    const auto& known = model.train_types()[static_cast<std::size_t>(e)];
    std::vector<int> candidates;
    for (int t = 0; t < kg.type_count(); ++t) {
        if (!std::binary_search(known.begin(), known.end(), t)) candidates.push_back(t);
    }
    const auto& s = *scores;
    std::stable_sort(candidates.begin(), candidates.end(), [&s](int a, int b) { return s(a) > s(b); });
    if (candidates.size() > k) candidates.resize(k);
    std::vector<Prediction> out;
    for (int t : candidates) {
        out.push_back({t, kg.vocab.types.label_of(t), s(t)});
    }
    return out;
}

} // namespace mclet::train
