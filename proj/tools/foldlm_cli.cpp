#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "foldlm/runner.hpp"

namespace fs = std::filesystem;
using namespace foldlm;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string ablate;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

RunConfig load_with_overrides(const CommonArgs& args) {
    RunConfig rc = load_run_config(args.config_path);
    if (args.seed_given) {
        rc.training.seed = args.seed;
        rc.training.seed_set = true;
        rc.model.seed = args.seed;
    }
    if (!args.out_dir.empty()) rc.output_dir = args.out_dir;
    if (!args.ablate.empty()) rc.ablate = args.ablate;
    rc.validate();
    return rc;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
    auto* c = cmd->add_option("--config", args.config_path, "run configuration (JSON)");
    if (config_required) c->required();
    cmd->add_option("--seed", args.seed, "override the run seed")
        ->each([&args](const std::string&) { args.seed_given = true; });
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--ablate", args.ablate,
                    "disable one term: attraction|cohesion|laplacian|gate")
        ->check(CLI::IsMember({"attraction", "cohesion", "laplacian", "gate"}));
}

int cmd_train(const CommonArgs& args) {
    RunConfig rc = load_with_overrides(args);
    if (rc.ablate == "attraction") rc.model.folding.alpha = 0.0;
    if (rc.ablate == "cohesion") rc.model.folding.gamma = 0.0;
    if (rc.ablate == "laplacian") rc.model.folding.beta = 0.0;
    if (rc.ablate == "gate") rc.training.optim.freeze_gates = true;
    const auto data = load_corpus(rc.data);
    detail::RunOutcome run = detail::train_and_measure(rc, rc.model, data);

    fs::create_directories(rc.output_dir);
    save_checkpoint((fs::path(rc.output_dir) / "model.ckpt").string(), rc.model, run.params);
    std::ofstream log(fs::path(rc.output_dir) / "train.log");
    for (const auto& line : run.loss_log) log << line << "\n";

    nlohmann::json j;
    j["schema_version"] = 1;
    j["report"] = detail::report_to_json(run.report);
    j["config"] = run_config_to_json(rc);
    write_file((fs::path(rc.output_dir) / "metrics.json").string(), json_6dp(j));

    for (const auto& [name, ppl] : run.report.perplexity)
        std::printf("held-out perplexity %s: %.6f\n", name.c_str(), ppl);
    std::printf("checkpoint: %s\n", (fs::path(rc.output_dir) / "model.ckpt").string().c_str());
    return 0;
}

int cmd_compare(const CommonArgs& args) {
    RunConfig rc = load_with_overrides(args);
    ComparisonResult result;
    try {
        result = run_experiment(rc);
    } catch (const TrainingError& e) {
        fs::create_directories(rc.output_dir);
        nlohmann::json j;
        j["schema_version"] = 1;
        j["partial"] = true;
        j["error"] = std::string(e.what());
        j["config"] = run_config_to_json(rc);
        write_file((fs::path(rc.output_dir) / "metrics.json").string(), json_6dp(j));
        throw;
    }
    emit_tables(result, rc.output_dir);
    save_checkpoint((fs::path(rc.output_dir) / "baseline.ckpt").string(), result.config.model,
                    result.baseline_params);
    ModelConfig fold_cfg = result.config.model;
    fold_cfg.fold_enabled = true;
    if (fold_cfg.fold_layers.empty())
        fold_cfg.fold_layers = ModelConfig::default_fold_layers(fold_cfg.n_layers);
    save_checkpoint((fs::path(rc.output_dir) / "folding.ckpt").string(), fold_cfg,
                    result.folding_params);

    // final-layer projection of the first held-out window, both variants
    const auto data = load_corpus(rc.data);
    const auto& first = data.begin()->second;
    const std::size_t len = std::min<std::size_t>(rc.training.window, first.held.size());
    if (len >= 2) {
        const std::vector<std::size_t> inputs(first.held.begin(), first.held.begin() + len);
        ModelConfig base_cfg = result.config.model;
        base_cfg.fold_enabled = false;
        const auto [bl, bt] = forward(result.baseline_params, base_cfg, inputs);
        export_projection(bt, base_cfg.n_layers - 1,
                          (fs::path(rc.output_dir) / "projection_baseline.csv").string());
        const auto [fl, ft] = forward(result.folding_params, fold_cfg, inputs);
        export_projection(ft, fold_cfg.n_layers - 1,
                          (fs::path(rc.output_dir) / "projection_folding.csv").string());
    }

    for (const auto& [name, b] : result.baseline.perplexity) {
        std::printf("perplexity %s: baseline %.6f folding %.6f\n", name.c_str(), b,
                    result.folding.perplexity.at(name));
    }
    if (!result.baseline.epoch_seconds.empty()) {
        std::printf("epoch overhead: %.2f%%\n",
                    training_overhead(result.baseline.epoch_seconds,
                                      result.folding.epoch_seconds));
    }
    std::printf("outputs in %s\n", rc.output_dir.c_str());
    return 0;
}

int cmd_fold_demo(std::uint64_t seed, const std::string& config_path) {
    FoldingConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path).model.folding;
    std::fputs(fold_demo(seed, cfg).c_str(), stdout);
    return 0;
}

int cmd_project(const CommonArgs& args, const std::string& model_path, std::size_t layer,
                bool layer_given) {
    RunConfig rc = load_with_overrides(args);
    auto [cfg, params] = load_checkpoint(model_path);
    const auto data = load_corpus(rc.data);
    const auto& first = data.begin()->second;
    const std::size_t len =
        std::min<std::size_t>(std::min(rc.training.window, cfg.max_seq), first.held.size());
    if (len < 2) throw MetricError("held-out split too small for a projection");
    const std::vector<std::size_t> inputs(first.held.begin(), first.held.begin() + len);
    const auto [logits, trace] = forward(params, cfg, inputs);
    const std::size_t target_layer = layer_given ? layer : cfg.n_layers - 1;
    fs::create_directories(rc.output_dir);
    const std::string out = (fs::path(rc.output_dir) / "projection.csv").string();
    export_projection(trace, target_layer, out);
    std::printf("projection written to %s\n", out.c_str());
    return 0;
}

int cmd_metrics(const CommonArgs& args, const std::string& model_path) {
    RunConfig rc = load_with_overrides(args);
    auto [cfg, params] = load_checkpoint(model_path);
    const auto data = load_corpus(rc.data);

    MetricsReport report;
    for (const auto& [name, cat] : data)
        report.perplexity[name] = perplexity(params, cfg, cat.held, rc.metrics.stride);
    const auto avg =
        detail::layer_metrics_over_held(params, cfg, data, rc.metrics, rc.training.window);
    report.layer_variance = avg.variance;
    report.head_utilization = avg.utilization;
    report.sparsity = avg.sparsity;

    nlohmann::json j;
    j["schema_version"] = 1;
    j["report"] = detail::report_to_json(report);
    j["config"] = run_config_to_json(rc);
    fs::create_directories(rc.output_dir);
    write_file((fs::path(rc.output_dir) / "metrics.json").string(), json_6dp(j));
    for (const auto& [name, ppl] : report.perplexity)
        std::printf("perplexity %s: %.6f\n", name.c_str(), ppl);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical latent space folding: training, comparison, and metrics"};
    app.require_subcommand(1);

    CommonArgs train_args, compare_args, project_args, metrics_args;
    std::uint64_t demo_seed = 7;
    std::string demo_config;
    std::string project_model, metrics_model;
    std::size_t project_layer = 0;
    bool project_layer_given = false;

    CLI::App* train = app.add_subcommand("train", "train one model per the config");
    add_common(train, train_args, true);

    CLI::App* compare =
        app.add_subcommand("compare", "train baseline and folding variants, emit all metrics");
    add_common(compare, compare_args, true);

    CLI::App* demo =
        app.add_subcommand("fold-demo", "run the folding algorithm on synthetic clusters");
    demo->add_option("--seed", demo_seed, "demo seed");
    demo->add_option("--config", demo_config, "optional config supplying folding parameters");

    CLI::App* project = app.add_subcommand("project", "export a 2-D latent projection CSV");
    add_common(project, project_args, true);
    project->add_option("--model", project_model, "checkpoint path")->required();
    project->add_option("--layer", project_layer, "layer index (default: last)")
        ->each([&project_layer_given](const std::string&) { project_layer_given = true; });

    CLI::App* metrics = app.add_subcommand("metrics", "evaluate a checkpoint on held-out data");
    add_common(metrics, metrics_args, true);
    metrics->add_option("--model", metrics_model, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (compare->parsed()) return cmd_compare(compare_args);
        if (demo->parsed()) return cmd_fold_demo(demo_seed, demo_config);
        if (project->parsed())
            return cmd_project(project_args, project_model, project_layer, project_layer_given);
        if (metrics->parsed()) return cmd_metrics(metrics_args, metrics_model);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
