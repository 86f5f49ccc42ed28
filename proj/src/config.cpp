#include "mclet/config.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mclet {

using nlohmann::json;

TrainConfig TrainConfig::fb15ket() {
    return TrainConfig{};
}

TrainConfig TrainConfig::yago43ket() {
    TrainConfig c;
    c.layers = 1;
    c.beta = 2.0;
    return c;
}

bool TrainConfig::ablates(kg::ViewKind kind) const {
    return std::find(view_ablation.begin(), view_ablation.end(), kind) != view_ablation.end();
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("config field '" + field + "' " + why);
    };
    auto positive_finite = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (dim < 1) fail("d", "must be >= 1");
    if (!positive_finite(lr)) fail("lr", "must be positive");
    if (!positive_finite(tau)) fail("tau", "must be positive");
    if (layers < 1) fail("L", "must be >= 1");
    if (heads < 1) fail("H", "must be >= 1");
    if (experts < 1) fail("M", "must be >= 1");
    if (!positive_finite(beta)) fail("beta", "must be positive");
    if (!std::isfinite(lambda) || lambda < 0.0) fail("lambda", "must be >= 0");
    if (!std::isfinite(gamma) || gamma < 0.0) fail("gamma", "must be >= 0");
    if (epochs < 1) fail("epochs", "must be >= 1");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (patience < 1) fail("patience", "must be >= 1");
    if (eval_every < 1) fail("eval_every", "must be >= 1");
    for (std::size_t i = 0; i < view_ablation.size(); ++i) {
        for (std::size_t j = i + 1; j < view_ablation.size(); ++j) {
            if (view_ablation[i] == view_ablation[j]) fail("view_ablation", "lists a view twice");
        }
    }
}

namespace {

kg::ViewKind parse_view(const std::string& s) {
    if (s == "e2t") return kg::ViewKind::e2t;
    if (s == "c2t") return kg::ViewKind::c2t;
    if (s == "e2c") return kg::ViewKind::e2c;
    throw std::invalid_argument("unknown view '" + s + "'");
}

} // namespace

std::string TrainConfig::to_json() const {
    json views = json::array();
    for (auto v : view_ablation) views.push_back(std::string(kg::to_string(v)));
    json j = {
        {"d", dim},
        {"lr", lr},
        {"tau", tau},
        {"L", layers},
        {"H", heads},
        {"M", experts},
        {"beta", beta},
        {"lambda", lambda},
        {"gamma", gamma},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"seed", seed},
        {"pooling", std::string(predictor::to_string(pooling))},
        {"view_ablation", views},
        {"include_final_layer", include_final_layer},
        {"negative_cap", negative_cap},
        {"patience", patience},
        {"eval_every", eval_every},
        {"mask_target_type", mask_target_type},
    };
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    return from_json(text, TrainConfig{});
}

TrainConfig TrainConfig::from_json(const std::string& text, const TrainConfig& base) {
    const json j = json::parse(text);
    if (!j.is_object()) {
        throw std::invalid_argument("config document must be an object");
    }
    TrainConfig c = base;
    for (const auto& [key, v] : j.items()) {
        if (key == "d") c.dim = v.get<int>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "tau") c.tau = v.get<double>();
        else if (key == "L") c.layers = v.get<int>();
        else if (key == "H") c.heads = v.get<int>();
        else if (key == "M") c.experts = v.get<int>();
        else if (key == "beta") c.beta = v.get<double>();
        else if (key == "lambda") c.lambda = v.get<double>();
        else if (key == "gamma") c.gamma = v.get<double>();
        else if (key == "epochs") c.epochs = v.get<int>();
        else if (key == "batch_size") c.batch_size = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "pooling") c.pooling = predictor::parse_pooling(v.get<std::string>());
        else if (key == "view_ablation") {
            c.view_ablation.clear();
            for (const auto& s : v) c.view_ablation.push_back(parse_view(s.get<std::string>()));
        }
        else if (key == "include_final_layer") c.include_final_layer = v.get<bool>();
        else if (key == "negative_cap") c.negative_cap = v.get<std::size_t>();
        else if (key == "patience") c.patience = v.get<int>();
        else if (key == "eval_every") c.eval_every = v.get<int>();
        else if (key == "mask_target_type") c.mask_target_type = v.get<bool>();
        else throw std::invalid_argument("unknown config key '" + key + "'");
    }
    return c;
}

} // namespace mclet
