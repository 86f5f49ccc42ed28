// mclet: prepare corpora, train, evaluate, predict and run ablations.

#include "mclet/ablation.hpp"
#include "mclet/checkpoint.hpp"
#include "mclet/config.hpp"
#include "mclet/evaluation.hpp"
#include "mclet/kgdata.hpp"
#include "mclet/model.hpp"
#include "mclet/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mclet;

namespace {

// Flags mirroring TrainConfig; only the ones given override the config file.
struct ConfigFlags {
    std::string config_file;
    std::string preset;
    std::optional<int> dim, layers, heads, experts, epochs, batch_size, patience, eval_every;
    std::optional<double> lr, tau, beta, lambda, gamma;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> negative_cap;
    std::optional<std::string> pooling;
    std::vector<std::string> view_ablation;
    bool include_final_layer = false;
    bool mask_target_type = false;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "JSON config file (TrainConfig field names)");
        app->add_option("--preset", preset, "Start from a dataset preset")->check(CLI::IsMember({"fb15ket", "yago43ket"}));
        app->add_option("--d", dim, "Embedding dimension");
        app->add_option("--lr", lr, "Learning rate");
        app->add_option("--tau", tau, "Contrastive temperature");
        app->add_option("--L", layers, "LightGCN layers");
        app->add_option("--H", heads, "Attention heads");
        app->add_option("--M", experts, "Experts");
        app->add_option("--beta", beta, "False-negative weight");
        app->add_option("--lambda", lambda, "Contrastive loss weight");
        app->add_option("--gamma", gamma, "L2 weight");
        app->add_option("--epochs", epochs, "Maximum epochs");
        app->add_option("--batch-size", batch_size, "Entities per batch");
        app->add_option("--seed", seed, "Random seed");
        app->add_option("--pooling", pooling, "pool, mha or mham")->check(CLI::IsMember({"pool", "mha", "mham"}));
        app->add_option("--view-ablation", view_ablation, "Views to ablate")->check(CLI::IsMember({"e2t", "c2t", "e2c"}));
        app->add_flag("--include-final-layer", include_final_layer, "Sum layers 0..L in the readout");
        app->add_option("--negative-cap", negative_cap, "Contrastive negatives per anchor (0 = all)");
        app->add_option("--patience", patience, "Early-stopping patience in evaluations");
        app->add_option("--eval-every", eval_every, "Epochs between validation passes");
        app->add_flag("--mask-target-type", mask_target_type, "Hide one sampled type neighbor per entity in training");
    }

    TrainConfig resolve() const {
        TrainConfig base = preset == "yago43ket" ? TrainConfig::yago43ket() : TrainConfig::fb15ket();
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw std::runtime_error("cannot open " + config_file);
            std::stringstream ss;
            ss << in.rdbuf();
            base = TrainConfig::from_json(ss.str(), base);
        }
        nlohmann::json j = nlohmann::json::object();
        auto put = [&j](const char* key, const auto& v) {
            if (v) j[key] = *v;
        };
        put("d", dim);
        put("lr", lr);
        put("tau", tau);
        put("L", layers);
        put("H", heads);
        put("M", experts);
        put("beta", beta);
        put("lambda", lambda);
        put("gamma", gamma);
        put("epochs", epochs);
        put("batch_size", batch_size);
        put("seed", seed);
        put("pooling", pooling);
        put("negative_cap", negative_cap);
        put("patience", patience);
        put("eval_every", eval_every);
        if (!view_ablation.empty()) j["view_ablation"] = view_ablation;
        if (include_final_layer) j["include_final_layer"] = true;
        if (mask_target_type) j["mask_target_type"] = true;
        TrainConfig c = TrainConfig::from_json(j.dump(), base);
        c.validate();
        return c;
    }
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

kg::Split split_option(const std::string& s) { return kg::parse_split(s); }

int cmd_prepare(const std::string& data_dir, const std::string& dataset, const kg::DatasetLayout& layout,
                const std::string& out) {
    const auto graph = kg::load_dataset(data_dir, kg::parse_dataset_kind(dataset), layout);
    std::cout << kg::format_stats(kg::compute_stats(graph));
    std::printf("corpus: %016llx\n", static_cast<unsigned long long>(kg::corpus_fingerprint(graph)));
    kg::save_cache(graph, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_train(const std::string& cache, const ConfigFlags& flags, const std::string& out_dir) {
    const TrainConfig config = flags.resolve();
    const model::TypingModel model(kg::load_cache(cache), config);
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "config.json", config.to_json() + "\n");

    std::ofstream history(fs::path(out_dir) / "history.tsv");
    history << "epoch\tloss\ttyping\tcontrastive\tregularizer\tvalid_mrr\n";
    const auto t0 = std::chrono::steady_clock::now();
    train::TrainOptions options;
    options.on_epoch = [&](const train::EpochRecord& r, const model::ModelParameters&) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("epoch %4d  loss %.6f  typing %.6f  cl %.6f", r.epoch, r.loss, r.typing, r.contrastive);
        if (r.valid_mrr) std::printf("  valid MRR %.4f", *r.valid_mrr);
        std::printf("  (%.1fs)\n", secs);
        std::fflush(stdout);
        char line[256];
        std::snprintf(line, sizeof(line), "%d\t%.17g\t%.17g\t%.17g\t%.17g\t", r.epoch, r.loss, r.typing,
                      r.contrastive, r.regularizer);
        history << line;
        if (r.valid_mrr) history << *r.valid_mrr;
        history << "\n";
        return false;
    };
    const auto result = train::train(model, options);
    const fs::path ckpt_path = fs::path(out_dir) / "checkpoint.bin";
    ckpt::save_checkpoint(result.best, ckpt_path);
    std::printf("best epoch %d, valid MRR %.4f%s\nwrote %s\n", result.best.epoch, result.best.best_valid_mrr,
                result.stopped_early ? " (early stop)" : "", ckpt_path.string().c_str());
    return 0;
}

struct Loaded {
    ckpt::Checkpoint checkpoint;
    model::TypingModel model;
};

Loaded load(const std::string& checkpoint_path, const std::string& cache) {
    auto c = ckpt::load_checkpoint(checkpoint_path);
    auto graph = kg::load_cache(cache);
    ckpt::check_compatible(c, graph);
    model::TypingModel m(std::move(graph), c.config);
    return {std::move(c), std::move(m)};
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& cache, const std::string& split,
                 const std::string& out) {
    const auto loaded = load(checkpoint_path, cache);
    const auto report = eval::evaluate(loaded.model, loaded.checkpoint.params, split_option(split));
    std::cout << eval::format_report(report);
    if (!out.empty()) {
        write_file(out, eval::format_key_values(report));
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& cache, const std::string& entity,
                std::size_t k) {
    const auto loaded = load(checkpoint_path, cache);
    const auto preds = train::predict(loaded.model, loaded.checkpoint.params, entity, k);
    if (preds.empty()) {
        std::cout << entity << " has no neighbors\n";
        return 0;
    }
    for (const auto& p : preds) {
        std::printf("%s\t%.6f\n", p.label.c_str(), p.score);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view contrastive entity typing"};
    app.require_subcommand(1);

    std::string data_dir, dataset = "custom", out;
    kg::DatasetLayout layout;
    auto* prepare = app.add_subcommand("prepare", "Parse a dataset directory into a binary cache");
    prepare->add_option("--data-dir", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    prepare->add_option("--dataset", dataset, "fb15ket, yago43ket or custom")
        ->check(CLI::IsMember({"fb15ket", "yago43ket", "custom"}));
    prepare->add_option("--triple-columns", layout.triple_columns, "Column order of the triple file, e.g. hrt");
    prepare->add_option("--triples-file", layout.triples, "Triple file name inside the directory");
    prepare->add_option("--alignment-file", layout.alignment, "Type alignment file name (yago43ket)");
    prepare->add_option("--out", out, "Cache file")->required();

    std::string cache, out_dir = "run";
    ConfigFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train and save the best checkpoint");
    train_cmd->add_option("--cache", cache, "Dataset cache")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out-dir", out_dir, "Output directory");
    train_flags.attach(train_cmd);

    std::string checkpoint, split = "test";
    auto* evaluate = app.add_subcommand("evaluate", "Filtered ranking metrics for a split");
    evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--cache", cache, "Dataset cache")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
    evaluate->add_option("--out", out, "Key-value metrics file");

    std::string entity;
    std::size_t k = 10;
    auto* predict = app.add_subcommand("predict", "Top-k missing types of an entity");
    predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    predict->add_option("--cache", cache, "Dataset cache")->required()->check(CLI::ExistingFile);
    predict->add_option("--entity", entity, "Entity label")->required();
    predict->add_option("-k,--k", k, "Number of types");

    ConfigFlags ablate_flags;
    std::vector<int> layer_list = {1, 2, 3, 4};
    std::vector<int> head_list = {1, 3, 5, 7, 9};
    std::vector<double> rates = {0.25, 0.5, 0.75, 0.9};
    std::vector<double> lambda_list = {0.0001, 0.001, 0.01, 0.1};
    std::vector<double> tau_list = {0.2, 0.4, 0.6, 0.8, 1.0};
    bool filter_1_4 = false;
    auto* ablate = app.add_subcommand("ablate", "Retrain under ablations and print a metrics table");
    ablate->require_subcommand(1);
    ablate->fallthrough();
    ablate->add_option("--cache", cache, "Dataset cache")->required()->check(CLI::ExistingFile);
    ablate->add_option("--split", split, "valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
    ablate->add_option("--out-dir", out_dir, "Directory for the results table");
    ablate_flags.attach(ablate);
    auto* ab_views = ablate->add_subcommand("views", "w/o e2t, w/o c2t, w/o e2c, w/o all, full");
    auto* ab_layers = ablate->add_subcommand("layers", "LightGCN layer sweep");
    ab_layers->add_option("--values", layer_list, "Layer counts")->delimiter(',');
    ab_layers->add_flag("--filter-1-4", filter_1_4, "Keep only entities with 1 to 4 train types");
    auto* ab_neighbors = ablate->add_subcommand("drop-neighbors", "Randomly drop relational neighbors");
    ab_neighbors->add_option("--rates", rates, "Drop rates in [0, 1)")->delimiter(',');
    auto* ab_relations = ablate->add_subcommand("drop-relations", "Randomly drop relation types");
    ab_relations->add_option("--rates", rates, "Drop rates in [0, 1)")->delimiter(',');
    auto* ab_heads = ablate->add_subcommand("heads", "Head-count sweep");
    ab_heads->add_option("--values", head_list, "Head counts")->delimiter(',');
    auto* ab_lambda = ablate->add_subcommand("lambda", "Contrastive weight sweep");
    ab_lambda->add_option("--values", lambda_list, "Lambda values")->delimiter(',');
    auto* ab_tau = ablate->add_subcommand("tau", "Temperature sweep");
    ab_tau->add_option("--values", tau_list, "Tau values")->delimiter(',');
    auto* ab_pooling = ablate->add_subcommand("pooling", "pool, mha and mham");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*prepare) return cmd_prepare(data_dir, dataset, layout, out);
        if (*train_cmd) return cmd_train(cache, train_flags, out_dir);
        if (*evaluate) return cmd_evaluate(checkpoint, cache, split, out);
        if (*predict) return cmd_predict(checkpoint, cache, entity, k);

        const TrainConfig config = ablate_flags.resolve();
        const auto graph = kg::load_cache(cache);
        ablation::SweepOptions options;
        options.split = split_option(split);
        std::cout << "setting\tMRR\tMR\tHits@1\tHits@3\tHits@10\tcorpus\n";
        options.on_row = [](const ablation::MetricRow& row) {
            const ablation::MetricRow one[] = {row};
            const std::string text = ablation::format_rows(one);
            std::cout << text.substr(text.find('\n') + 1) << std::flush;
        };
        std::vector<ablation::MetricRow> rows;
        std::string name;
        if (*ab_views) {
            name = "views";
            rows = ablation::run_view_ablation(config, graph, options);
        } else if (*ab_layers) {
            name = "layers";
            rows = ablation::run_layer_sweep(config, graph, layer_list, filter_1_4, options);
        } else if (*ab_neighbors) {
            name = "drop-neighbors";
            rows = ablation::run_dropping_sweep(config, graph, ablation::DropMode::neighbors, rates, options);
        } else if (*ab_relations) {
            name = "drop-relations";
            rows = ablation::run_dropping_sweep(config, graph, ablation::DropMode::relation_types, rates, options);
        } else if (*ab_heads) {
            name = "heads";
            rows = ablation::run_head_sweep(config, graph, head_list, options);
        } else if (*ab_lambda) {
            name = "lambda";
            rows = ablation::run_lambda_sweep(config, graph, lambda_list, options);
        } else if (*ab_tau) {
            name = "tau";
            rows = ablation::run_tau_sweep(config, graph, tau_list, options);
        } else if (*ab_pooling) {
            name = "pooling";
            rows = ablation::run_pooling_sweep(config, graph, options);
        }
        fs::create_directories(out_dir);
        const fs::path table = fs::path(out_dir) / ("ablate_" + name + ".tsv");
        write_file(table, ablation::format_rows(rows));
        std::cerr << "wrote " << table.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
