#pragma once

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "foldlm/checkpoint.hpp"
#include "foldlm/config_json.hpp"
#include "foldlm/corpus.hpp"
#include "foldlm/metrics.hpp"
#include "foldlm/pca.hpp"
#include "foldlm/train.hpp"

namespace foldlm {

struct TrainingConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 16;
    std::size_t window = 128;
    std::uint64_t seed = 0;
    bool seed_set = false;
    OptimConfig optim;
};

struct MetricsConfig {
    double tau = 0.5;
    double eps = 1e-3;
    std::size_t stride = 0;  // 0 = max_seq
    std::vector<std::string> reorder_prompts;
    std::size_t reorder_gen = 64;
    std::size_t prompt_len = 32;
    std::size_t prompts_per_category = 4;
    std::size_t trace_windows = 8;
};

struct RunConfig {
    int schema_version = 1;
    ModelConfig model;
    std::map<std::string, std::string> data;  // category -> path
    TrainingConfig training;
    MetricsConfig metrics;
    std::string output_dir = "out";
    std::string ablate;  // "", attraction, cohesion, laplacian, gate

    void validate() const {
        if (data.empty()) throw ConfigError("config needs at least one corpus category");
        if (!training.seed_set) throw ConfigError("config requires an explicit seed");
        if (training.window < 2) throw ConfigError("training window must be >= 2");
        if (training.window > model.max_seq)
            throw ConfigError("training window exceeds model max_seq");
        if (training.batch_size == 0) throw ConfigError("batch size must be positive");
        if (!ablate.empty() && ablate != "attraction" && ablate != "cohesion" &&
            ablate != "laplacian" && ablate != "gate")
            throw ConfigError("unknown ablation: " + ablate);
        model.validate();
    }
};

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
    nlohmann::json j;
    j["schema_version"] = rc.schema_version;
    j["model"] = model_to_json(rc.model);
    j["data"] = rc.data;
    nlohmann::json t;
    t["epochs"] = rc.training.epochs;
    t["batch_size"] = rc.training.batch_size;
    t["window"] = rc.training.window;
    if (rc.training.seed_set) t["seed"] = rc.training.seed;
    t["optim"] = optim_to_json(rc.training.optim);
    j["training"] = t;
    nlohmann::json m;
    m["tau"] = rc.metrics.tau;
    m["eps"] = rc.metrics.eps;
    m["stride"] = rc.metrics.stride;
    m["reorder_prompts"] = rc.metrics.reorder_prompts;
    m["reorder_gen"] = rc.metrics.reorder_gen;
    m["prompt_len"] = rc.metrics.prompt_len;
    m["prompts_per_category"] = rc.metrics.prompts_per_category;
    m["trace_windows"] = rc.metrics.trace_windows;
    j["metrics"] = m;
    j["output_dir"] = rc.output_dir;
    j["ablate"] = rc.ablate;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig rc;
    rc.schema_version = j.value("schema_version", 1);
    if (rc.schema_version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(rc.schema_version));
    if (j.contains("model")) rc.model = model_from_json(j.at("model"));
    if (j.contains("data"))
        rc.data = j.at("data").get<std::map<std::string, std::string>>();
    if (j.contains("training")) {
        const auto& t = j.at("training");
        rc.training.epochs = t.value("epochs", rc.training.epochs);
        rc.training.batch_size = t.value("batch_size", rc.training.batch_size);
        rc.training.window = t.value("window", rc.training.window);
        if (t.contains("seed")) {
            rc.training.seed = t.at("seed").get<std::uint64_t>();
            rc.training.seed_set = true;
        }
        if (t.contains("optim")) rc.training.optim = optim_from_json(t.at("optim"));
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        rc.metrics.tau = m.value("tau", rc.metrics.tau);
        rc.metrics.eps = m.value("eps", rc.metrics.eps);
        rc.metrics.stride = m.value("stride", rc.metrics.stride);
        rc.metrics.reorder_prompts =
            m.value("reorder_prompts", rc.metrics.reorder_prompts);
        rc.metrics.reorder_gen = m.value("reorder_gen", rc.metrics.reorder_gen);
        rc.metrics.prompt_len = m.value("prompt_len", rc.metrics.prompt_len);
        rc.metrics.prompts_per_category =
            m.value("prompts_per_category", rc.metrics.prompts_per_category);
        rc.metrics.trace_windows = m.value("trace_windows", rc.metrics.trace_windows);
    }
    rc.output_dir = j.value("output_dir", rc.output_dir);
    rc.ablate = j.value("ablate", rc.ablate);
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse failure: " + std::string(e.what()));
    }
    return run_config_from_json(j);
}

/// JSON emission with fixed 6-decimal reals and lexicographically sorted
/// keys, so identical results serialize to identical bytes.
inline void emit_json_6dp(std::ostream& os, const nlohmann::json& j, int indent = 0) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            std::size_t k = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++k) {
                os << pad_in << nlohmann::json(it.key()).dump() << ": ";
                emit_json_6dp(os, it.value(), indent + 1);
                if (k + 1 < j.size()) os << ",";
                os << "\n";
            }
            os << pad << "}";
            return;
        }
        case nlohmann::json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                os << pad_in;
                emit_json_6dp(os, j[i], indent + 1);
                if (i + 1 < j.size()) os << ",";
                os << "\n";
            }
            os << pad << "]";
            return;
        }
        case nlohmann::json::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                os << "null";
                return;
            }
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            os << buf;
            return;
        }
        default:
            os << j.dump();
            return;
    }
}

inline std::string json_6dp(const nlohmann::json& j) {
    std::ostringstream ss;
    emit_json_6dp(ss, j);
    ss << "\n";
    return ss.str();
}

struct ComparisonResult {
    MetricsReport baseline;
    MetricsReport folding;
    std::map<std::string, double> reorder_cross;  // folding vs baseline outputs
    std::vector<std::string> batch_hashes;        // per epoch, shared by both runs
    std::vector<std::string> warnings;
    std::string ablation;
    bool partial = false;
    RunConfig config;
    Parameters baseline_params;
    Parameters folding_params;
};

namespace detail {

inline std::string fnv1a_hex(const std::vector<std::size_t>& values) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t v : values) {
        for (std::size_t b = 0; b < 8; ++b) {
            h ^= (static_cast<std::uint64_t>(v) >> (8 * b)) & 0xFF;
            h *= 1099511628211ULL;
        }
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

/// Training windows of (window + 1) tokens, non-overlapping, pooled across
/// categories in name order.
inline std::vector<std::vector<std::size_t>> build_windows(
    const std::map<std::string, CategoryData>& data, std::size_t window) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& [name, cat] : data) {
        for (std::size_t off = 0; off + window + 1 <= cat.train.size(); off += window) {
            out.emplace_back(cat.train.begin() + off, cat.train.begin() + off + window + 1);
        }
    }
    if (out.empty()) throw ConfigError("corpus too small for even one training window");
    return out;
}

struct EpochPlan {
    std::vector<std::size_t> order;
    std::string hash;
};

inline EpochPlan epoch_plan(std::size_t n_windows, std::uint64_t seed, std::size_t epoch) {
    EpochPlan plan;
    plan.order.resize(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) plan.order[i] = i;
    RngState rng(seed * 1000003ULL + epoch + 1);
    for (std::size_t i = n_windows; i > 1; --i)
        std::swap(plan.order[i - 1], plan.order[rng_below(rng, i)]);
    plan.hash = fnv1a_hex(plan.order);
    return plan;
}

struct LayerMetricsAvg {
    std::vector<double> variance, utilization, sparsity;
};

inline LayerMetricsAvg layer_metrics_over_held(const Parameters& p, const ModelConfig& cfg,
                                               const std::map<std::string, CategoryData>& data,
                                               const MetricsConfig& mc, std::size_t window) {
    LayerMetricsAvg avg;
    avg.variance.assign(cfg.n_layers, 0.0);
    avg.utilization.assign(cfg.n_layers, 0.0);
    avg.sparsity.assign(cfg.n_layers, 0.0);
    std::size_t count = 0;
    for (const auto& [name, cat] : data) {
        std::size_t used = 0;
        for (std::size_t off = 0; off + 2 <= cat.held.size() && used < mc.trace_windows;
             off += window, ++used) {
            const std::size_t len = std::min(window, cat.held.size() - off);
            if (len < 2) break;
            const std::vector<std::size_t> inputs(cat.held.begin() + off,
                                                  cat.held.begin() + off + len);
            const auto [logits, trace] = forward(p, cfg, inputs);
            for (std::size_t l = 0; l < cfg.n_layers; ++l) {
                avg.variance[l] += intra_layer_variance(trace, l);
                avg.utilization[l] += attention_head_utilization(trace, l, mc.tau);
                avg.sparsity[l] += activation_sparsity(trace, l, mc.eps);
            }
            ++count;
        }
    }
    if (count == 0) throw ConfigError("held-out split too small for layer metrics");
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        avg.variance[l] /= static_cast<double>(count);
        avg.utilization[l] /= static_cast<double>(count);
        avg.sparsity[l] /= static_cast<double>(count);
    }
    return avg;
}

/// Deterministic reordering prompts: evenly spaced held-out slices with
/// enough continuation left to compare against.
inline std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
reorder_prompts_for(const CategoryData& cat, const MetricsConfig& mc) {
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out;
    const std::size_t need = mc.prompt_len + mc.reorder_gen;
    if (cat.held.size() < need) return out;
    const std::size_t usable = cat.held.size() - need;
    const std::size_t count = std::max<std::size_t>(1, mc.prompts_per_category);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t off = count == 1 ? 0 : usable * k / (count - 1);
        out.emplace_back(
            std::vector<std::size_t>(cat.held.begin() + off,
                                     cat.held.begin() + off + mc.prompt_len),
            std::vector<std::size_t>(cat.held.begin() + off + mc.prompt_len,
                                     cat.held.begin() + off + need));
    }
    return out;
}

struct RunOutcome {
    MetricsReport report;
    Parameters params;
    std::vector<std::string> batch_hashes;
    std::vector<std::string> loss_log;  // "step N loss X"
};

inline void measure_into(RunOutcome& out, const RunConfig& rc, const ModelConfig& cfg,
                         const std::map<std::string, CategoryData>& data) {
    for (const auto& [name, cat] : data) {
        const double ppl = perplexity(out.params, cfg, cat.held, rc.metrics.stride);
        out.report.perplexity[name] = ppl;
        out.report.perplexity_history[name].push_back(ppl);
    }
    const LayerMetricsAvg avg =
        layer_metrics_over_held(out.params, cfg, data, rc.metrics, rc.training.window);
    out.report.layer_variance = avg.variance;
    out.report.head_utilization = avg.utilization;
    out.report.sparsity = avg.sparsity;
}

inline RunOutcome train_and_measure(const RunConfig& rc, const ModelConfig& cfg,
                                    const std::map<std::string, CategoryData>& data) {
    RunOutcome out;
    out.params = init_parameters(cfg);
    Trainer trainer(out.params, cfg, rc.training.optim);
    const auto windows = build_windows(data, rc.training.window);

    // epochs = 0 reports the untrained model (init-equivalence run)
    if (rc.training.epochs == 0) {
        measure_into(out, rc, cfg, data);
        return out;
    }
    for (std::size_t epoch = 0; epoch < rc.training.epochs; ++epoch) {
        const EpochPlan plan = epoch_plan(windows.size(), rc.training.seed, epoch);
        out.batch_hashes.push_back(plan.hash);
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t b = 0; b < plan.order.size(); b += rc.training.batch_size) {
            const std::size_t e = std::min(plan.order.size(), b + rc.training.batch_size);
            std::vector<std::vector<std::size_t>> batch;
            batch.reserve(e - b);
            for (std::size_t i = b; i < e; ++i) batch.push_back(windows[plan.order[i]]);
            const double l = trainer.step(batch);
            char line[64];
            std::snprintf(line, sizeof(line), "step %zu loss %.6f",
                          static_cast<std::size_t>(trainer.steps_done()), l);
            out.loss_log.emplace_back(line);
        }
        const auto t1 = std::chrono::steady_clock::now();
        out.report.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        measure_into(out, rc, cfg, data);
    }
    return out;
}

}  // namespace detail

/// Train the baseline (folding disabled) and the folding variant from the
/// same seed and identical batch order, measure everything, and return the
/// comparison. Ablations apply to the folding side only.
inline ComparisonResult run_experiment(const RunConfig& rc) {
    rc.validate();
    const auto data = load_corpus(rc.data);

    ComparisonResult result;
    result.config = rc;
    result.ablation = rc.ablate;

    RunConfig base_rc = rc;
    base_rc.model.fold_enabled = false;

    RunConfig fold_rc = rc;
    fold_rc.model.fold_enabled = true;
    if (fold_rc.model.fold_layers.empty())
        fold_rc.model.fold_layers = ModelConfig::default_fold_layers(fold_rc.model.n_layers);
    if (rc.ablate == "attraction") fold_rc.model.folding.alpha = 0.0;
    if (rc.ablate == "cohesion") fold_rc.model.folding.gamma = 0.0;
    if (rc.ablate == "laplacian") fold_rc.model.folding.beta = 0.0;
    if (rc.ablate == "gate") fold_rc.training.optim.freeze_gates = true;

    detail::RunOutcome base = detail::train_and_measure(base_rc, base_rc.model, data);
    detail::RunOutcome fold = detail::train_and_measure(fold_rc, fold_rc.model, data);

    if (base.batch_hashes != fold.batch_hashes)
        throw NumericError("baseline and folding consumed different batch sequences");
    result.batch_hashes = base.batch_hashes;

    // Reordering: each model's greedy continuation against the true
    // held-out continuation (per category), plus the cross-model value.
    for (const auto& [name, cat] : data) {
        const auto prompts = detail::reorder_prompts_for(cat, rc.metrics);
        if (prompts.empty()) {
            result.warnings.push_back("category " + name + ": held-out too small for reordering");
            continue;
        }
        double b_sum = 0.0, f_sum = 0.0, x_sum = 0.0;
        for (const auto& [prompt, truth] : prompts) {
            auto b_out = generate(base.params, base_rc.model, prompt, rc.metrics.reorder_gen,
                                  GenMode::greedy);
            auto f_out = generate(fold.params, fold_rc.model, prompt, rc.metrics.reorder_gen,
                                  GenMode::greedy);
            const std::vector<std::size_t> b_gen(b_out.begin() + prompt.size(), b_out.end());
            const std::vector<std::size_t> f_gen(f_out.begin() + prompt.size(), f_out.end());
            b_sum += token_reordering_frequency(b_gen, truth);
            f_sum += token_reordering_frequency(f_gen, truth);
            x_sum += token_reordering_frequency(f_gen, b_gen);
        }
        const double inv = 1.0 / static_cast<double>(prompts.size());
        base.report.reordering[name] = b_sum * inv;
        fold.report.reordering[name] = f_sum * inv;
        result.reorder_cross[name] = x_sum * inv;
    }
    // user-supplied prompts are only comparable across models
    if (!rc.metrics.reorder_prompts.empty()) {
        double x_sum = 0.0;
        std::size_t used = 0;
        for (const std::string& text : rc.metrics.reorder_prompts) {
            if (text.empty()) continue;
            const auto prompt = tokenize(text);
            auto b_out = generate(base.params, base_rc.model, prompt, rc.metrics.reorder_gen,
                                  GenMode::greedy);
            auto f_out = generate(fold.params, fold_rc.model, prompt, rc.metrics.reorder_gen,
                                  GenMode::greedy);
            x_sum += token_reordering_frequency(
                std::vector<std::size_t>(f_out.begin() + prompt.size(), f_out.end()),
                std::vector<std::size_t>(b_out.begin() + prompt.size(), b_out.end()));
            ++used;
        }
        if (used > 0) result.reorder_cross["prompts"] = x_sum / static_cast<double>(used);
    }

    const std::string config_echo = json_6dp(run_config_to_json(rc));
    base.report.config_echo = config_echo;
    fold.report.config_echo = config_echo;
    result.baseline = std::move(base.report);
    result.folding = std::move(fold.report);
    result.baseline_params = std::move(base.params);
    result.folding_params = std::move(fold.params);

    namespace fs = std::filesystem;
    fs::create_directories(rc.output_dir);
    {
        std::ofstream log(fs::path(rc.output_dir) / "train_baseline.log");
        for (const auto& line : base.loss_log) log << line << "\n";
        std::ofstream logf(fs::path(rc.output_dir) / "train_folding.log");
        for (const auto& line : fold.loss_log) logf << line << "\n";
    }
    return result;
}

namespace detail {

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["layer_variance"] = r.layer_variance;
    j["head_utilization"] = r.head_utilization;
    j["sparsity"] = r.sparsity;
    j["perplexity"] = r.perplexity;
    j["perplexity_history"] = r.perplexity_history;
    j["reordering"] = r.reordering;
    return j;
}

inline void write_change_csv(const std::string& path, const std::string& key_col,
                             const std::vector<std::string>& keys,
                             const std::vector<double>& baseline,
                             const std::vector<double>& hfu,
                             std::vector<std::string>& warnings) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    const std::string file_name = std::filesystem::path(path).filename().string();
    os << key_col << ",baseline,hfu,change_pct\n";
    for (std::size_t i = 0; i < keys.size(); ++i) {
        char buf[128];
        if (std::abs(baseline[i]) < 1e-12) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,", keys[i].c_str(), baseline[i],
                          hfu[i]);
            warnings.push_back(file_name + ": zero baseline for " + keys[i] +
                               ", change_pct left empty");
        } else {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f", keys[i].c_str(), baseline[i],
                          hfu[i], 100.0 * (hfu[i] - baseline[i]) / baseline[i]);
        }
        os << buf << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace detail

/// Write variance.csv, heads.csv, reorder.csv, metrics.json, and
/// timings.json. Timings are wall-clock and live in their own file so
/// metrics.json stays byte-reproducible.
inline void emit_tables(const ComparisonResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> warnings = result.warnings;

    std::vector<std::string> layer_names;
    for (std::size_t l = 0; l < result.baseline.layer_variance.size(); ++l)
        layer_names.push_back(std::to_string(l));
    detail::write_change_csv((fs::path(out_dir) / "variance.csv").string(), "layer",
                             layer_names, result.baseline.layer_variance,
                             result.folding.layer_variance, warnings);
    detail::write_change_csv((fs::path(out_dir) / "heads.csv").string(), "layer", layer_names,
                             result.baseline.head_utilization, result.folding.head_utilization,
                             warnings);

    std::vector<std::string> categories;
    std::vector<double> base_reorder, fold_reorder;
    for (const auto& [name, value] : result.baseline.reordering) {
        categories.push_back(name);
        base_reorder.push_back(value);
        fold_reorder.push_back(result.folding.reordering.at(name));
    }
    detail::write_change_csv((fs::path(out_dir) / "reorder.csv").string(), "category",
                             categories, base_reorder, fold_reorder, warnings);

    nlohmann::json j;
    j["schema_version"] = 1;
    j["ablation"] = result.ablation;
    j["partial"] = result.partial;
    j["baseline"] = detail::report_to_json(result.baseline);
    j["folding"] = detail::report_to_json(result.folding);
    nlohmann::json deltas;
    {
        nlohmann::json dp;
        for (const auto& [name, b] : result.baseline.perplexity)
            dp[name] = result.folding.perplexity.at(name) - b;
        deltas["perplexity"] = dp;
        std::vector<double> dv;
        for (std::size_t l = 0; l < result.baseline.layer_variance.size(); ++l)
            dv.push_back(result.folding.layer_variance[l] - result.baseline.layer_variance[l]);
        deltas["layer_variance"] = dv;
    }
    j["deltas"] = deltas;
    j["reorder_cross"] = result.reorder_cross;
    j["batch_hashes"] = result.batch_hashes;
    j["warnings"] = warnings;
    j["config"] = run_config_to_json(result.config);
    write_file((fs::path(out_dir) / "metrics.json").string(), json_6dp(j));

    nlohmann::json t;
    t["epoch_seconds_baseline"] = result.baseline.epoch_seconds;
    t["epoch_seconds_folding"] = result.folding.epoch_seconds;
    if (!result.baseline.epoch_seconds.empty() &&
        result.baseline.epoch_seconds.size() == result.folding.epoch_seconds.size()) {
        t["overhead_pct"] =
            training_overhead(result.baseline.epoch_seconds, result.folding.epoch_seconds);
    }
    write_file((fs::path(out_dir) / "timings.json").string(), json_6dp(t));
}

/// PCA projection of one layer's residual activations to 2-D, written as
/// CSV with the input token id per row.
inline void export_projection(const ForwardTrace& trace, std::size_t layer,
                              const std::string& path) {
    if (layer >= trace.residual.size()) throw MetricError("layer index out of range");
    const Mat& x = trace.residual[layer];
    if (x.rows() < 2) throw MetricError("projection needs at least 2 tokens");
    const Mat proj = pca_project(x, std::min<std::size_t>(2, x.cols()));
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "token,x,y\n";
    for (std::size_t i = 0; i < proj.rows(); ++i) {
        const std::size_t tok = i < trace.input_tokens.size() ? trace.input_tokens[i] : 0;
        char buf[96];
        const double y = proj.cols() > 1 ? proj(i, 1) : 0.0;
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f", tok, proj(i, 0), y);
        os << buf << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

/// Run the folding algorithm on seeded synthetic clusters and return the
/// printable objective/energy trace.
inline std::string fold_demo(std::uint64_t seed, FoldingConfig cfg = {}) {
    const std::size_t n = 60, d = 8;
    cfg.clusters = 3;
    RngState rng(seed);
    Mat anchors(3, d);
    for (double& v : anchors.raw()) v = rng_gaussian(rng);
    anchors = row_normalize(anchors);
    Mat x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            x(i, j) = anchors(i % 3, j) + 0.15 * rng_gaussian(rng);
    x = row_normalize(x);

    auto layers = make_folding_layers(x, cfg, rng);
    const FoldTrace trace = fold(x, layers, cfg);

    auto variance = [](const Mat& m) {
        const Mat mean = row_mean(m);
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) {
                const double c = m(i, j) - mean(0, j);
                s += c * c;
            }
        return s / static_cast<double>(m.rows() * m.cols());
    };

    std::ostringstream ss;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "fold-demo seed=%llu n=%zu d=%zu K=%zu depth=%zu\n",
                  static_cast<unsigned long long>(seed), n, d, cfg.clusters, cfg.depth);
    ss << buf;
    for (std::size_t l = 0; l < trace.objective.size(); ++l) {
        std::snprintf(buf, sizeof(buf), "level %zu objective %.6f energy %.6f\n", l,
                      trace.objective[l], trace.energy[l]);
        ss << buf;
    }
    std::snprintf(buf, sizeof(buf), "variance initial %.6f final %.6f\n",
                  variance(trace.embeddings.front()), variance(trace.embeddings.back()));
    ss << buf;
    return ss.str();
}

}  // namespace foldlm
