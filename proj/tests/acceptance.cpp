// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria 5-7 share three desk-scale training runs and
// dominate the runtime.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "foldlm/checkpoint.hpp"
#include "foldlm/numdiff.hpp"
#include "foldlm/runner.hpp"

using namespace foldlm;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int number;
    std::string title;
    std::function<void(std::string& detail)> run;  // throws on failure
};

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

Mat random_unit_rows(std::size_t n, std::size_t d, RngState& rng) {
    Mat m(n, d);
    for (double& v : m.raw()) v = rng_gaussian(rng);
    return row_normalize(m);
}

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot read " + path.string());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------- 1
void c1_gradient_oracle(std::string& detail) {
    double worst = 0.0;
    int instances = 0;
    for (std::uint64_t seed : {11ULL, 22ULL}) {
        RngState rng(seed);
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t n = 2 + static_cast<std::size_t>(rng_below(rng, 7));
            const std::size_t d = 1 + static_cast<std::size_t>(rng_below(rng, 4));
            Mat x = random_unit_rows(n, d, rng);
            const std::size_t k = 1 + static_cast<std::size_t>(rng_below(rng, 3));
            Mat centers(k, d);
            for (double& v : centers.raw()) v = rng_gaussian(rng);
            std::vector<std::size_t> assignment(n);
            for (auto& a : assignment) a = static_cast<std::size_t>(rng_below(rng, k));
            FoldingConfig cfg;
            cfg.alpha = 0.5 + rng_uniform(rng);
            cfg.gamma = 0.5 + rng_uniform(rng);

            const Mat analytic = objective_gradient(x, centers, assignment, cfg);
            const Mat numeric = finite_diff_grad(
                [&](const Mat& probe) {
                    return structural_objective(probe, centers, assignment, cfg);
                },
                x);
            worst = std::max(worst, max_rel_err(analytic, numeric, 1e-8));
            ++instances;
        }
    }
    require(instances == 10, "expected 10 instances");
    require(worst < 1e-4, fmt("max relative error %.3g >= 1e-4", worst));
    detail = fmt("max rel err %.3g over 10 instances", worst);
}

// ---------------------------------------------------------------- 2
void c2_full_model_gradient(std::string& detail) {
    ModelConfig cfg;
    cfg.vocab_size = 32;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq = 8;
    cfg.fold_enabled = true;
    cfg.fold_layers = {0};
    cfg.folding.clusters = 2;
    cfg.folding.eta = 0.05;
    cfg.seed = 7;

    Parameters p = init_parameters(cfg);
    RngState prng(505);
    p.for_each([&](const std::string& name, Mat& m) {
        if (name.ends_with(".gate")) return;
        for (double& v : m.raw()) v += 0.3 * rng_gaussian(prng);
    });
    p.layers[0].fold.gate(0, 0) = 0.5;

    RngState rng(51);
    std::vector<std::size_t> window(5);
    for (auto& t : window) t = static_cast<std::size_t>(rng_below(rng, cfg.vocab_size));
    const std::vector<std::size_t> inputs(window.begin(), window.end() - 1);
    const std::vector<std::size_t> targets(window.begin() + 1, window.end());

    Tape t;
    ParamIds ids = register_params(t, p);
    GraphNodes g = build_forward(t, ids, cfg, inputs);
    t.backward(t.cross_entropy_mean(g.logits, targets));

    double worst = 0.0;
    std::string worst_name;
    std::size_t idx = 0;
    p.for_each([&](const std::string& name, Mat& tensor) {
        const Mat& analytic = t.grad(ids.flat[idx]);
        const Mat numeric = finite_diff_grad(
            [&](const Mat& probe) {
                Mat saved = tensor;
                tensor = probe;
                const double value = loss(forward_logits(p, cfg, inputs), targets);
                tensor = saved;
                return value;
            },
            tensor, 1e-5);
        const double err = max_rel_err(analytic, numeric, 1e-8);
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
        ++idx;
    });
    require(worst < 1e-3, fmt("worst tensor %s rel err %.3g >= 1e-3", worst_name.c_str(), worst));
    detail = fmt("%zu tensors, worst %s at %.3g", idx, worst_name.c_str(), worst);
}

// ---------------------------------------------------------------- 3
void c3_identity_at_init(std::string& detail) {
    ModelConfig with;
    with.fold_enabled = true;
    with.fold_layers = {1, 3};
    with.seed = 42;
    ModelConfig without = with;
    without.fold_enabled = false;

    const Parameters pw = init_parameters(with);
    const Parameters po = init_parameters(without);
    RngState rng(77);
    double worst = 0.0;
    for (int prompt = 0; prompt < 10; ++prompt) {
        const std::size_t len = 8 + static_cast<std::size_t>(rng_below(rng, 25));
        std::vector<std::size_t> tokens(len);
        for (auto& t : tokens) t = static_cast<std::size_t>(rng_below(rng, with.vocab_size));
        const Mat lw = forward_logits(pw, with, tokens);
        const Mat lo = forward_logits(po, without, tokens);
        for (std::size_t i = 0; i < lw.size(); ++i)
            worst = std::max(worst, std::abs(lw.raw()[i] - lo.raw()[i]));
    }
    require(worst < 1e-6, fmt("max |delta| %.3g >= 1e-6", worst));
    detail = fmt("max logits delta %.3g over 10 prompts", worst);
}

// ---------------------------------------------------------------- 4
void c4_energy_descent(std::string& detail) {
    RngState rng(1);
    const std::size_t n = 32, d = 8;
    Mat anchors(3, d);
    for (double& v : anchors.raw()) v = rng_gaussian(rng);
    anchors = row_normalize(anchors);
    Mat x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            x(i, j) = anchors(i % 3, j) + 0.3 * rng_gaussian(rng);

    FoldingConfig cfg;
    cfg.clusters = 3;
    cfg.flow_dt = 1e-2;
    Mat centers(3, d);
    RngState crng(101);
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t idx = static_cast<std::size_t>(rng_below(crng, n));
        for (std::size_t j = 0; j < d; ++j) centers(k, j) = x(idx, j);
    }
    const FlowResult res = run_flow(x, centers, cfg, 200, 1e-9);
    for (std::size_t i = 1; i < res.energies.size(); ++i) {
        require(res.energies[i] <= res.energies[i - 1] + 1e-9,
                fmt("energy rose at step %zu", i));
    }
    const double ratio = res.energies.back() / res.energies.front();
    require(ratio < 0.5, fmt("final/initial energy %.3f >= 0.5", ratio));
    detail = fmt("E %.3f -> %.3f (ratio %.3f), 200 monotone steps", res.energies.front(),
                 res.energies.back(), ratio);
}

// ------------------------------------------------------- desk-scale runs
struct DeskRun {
    std::uint64_t seed;
    ComparisonResult result;
};

std::vector<DeskRun> desk_runs(const fs::path& work) {
    fs::create_directories(work);
    const std::string tech = (work / "technical.txt").string();
    const std::string narr = (work / "narrative.txt").string();
    write_file(tech, synth_corpus("technical", 262144, 101));
    write_file(narr, synth_corpus("narrative", 262144, 102));

    std::vector<DeskRun> runs;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        RunConfig rc;
        rc.model.d_model = 64;
        rc.model.n_layers = 4;
        rc.model.n_heads = 4;
        rc.model.d_ff = 256;
        rc.model.max_seq = 64;
        rc.model.fold_layers = {1, 3};
        rc.model.folding.clusters = 4;
        rc.model.seed = seed;
        rc.training.epochs = 3;
        rc.training.batch_size = 16;
        rc.training.window = 64;
        rc.training.seed = seed;
        rc.training.seed_set = true;
        rc.data["technical"] = tech;
        rc.data["narrative"] = narr;
        rc.output_dir = (work / ("out_seed" + std::to_string(seed))).string();
        runs.push_back({seed, run_experiment(rc)});
    }
    return runs;
}

void c5_variance_direction(const std::vector<DeskRun>& runs, std::string& detail) {
    int seeds_passing = 0;
    std::string per_seed;
    for (const DeskRun& run : runs) {
        int below = 0;
        const auto& base = run.result.baseline.layer_variance;
        const auto& fold = run.result.folding.layer_variance;
        require(base.size() == 4 && fold.size() == 4, "expected 4 layers");
        for (std::size_t l = 0; l < 4; ++l)
            if (fold[l] < base[l]) ++below;
        if (below >= 3) ++seeds_passing;
        per_seed += fmt("seed %llu: %d/4 below; ", (unsigned long long)run.seed, below);
    }
    require(seeds_passing >= 2, per_seed + fmt("only %d/3 seeds pass", seeds_passing));
    detail = per_seed + fmt("%d/3 seeds pass", seeds_passing);
}

void c6_perplexity_bound(const std::vector<DeskRun>& runs, std::string& detail) {
    std::string report;
    for (const DeskRun& run : runs) {
        double base_mean = 0.0, fold_mean = 0.0;
        for (const auto& [name, v] : run.result.baseline.perplexity) base_mean += v;
        for (const auto& [name, v] : run.result.folding.perplexity) fold_mean += v;
        base_mean /= static_cast<double>(run.result.baseline.perplexity.size());
        fold_mean /= static_cast<double>(run.result.folding.perplexity.size());
        report += fmt("seed %llu: baseline %.4f folding %.4f delta %+.4f; ",
                      (unsigned long long)run.seed, base_mean, fold_mean,
                      fold_mean - base_mean);
        require(fold_mean <= 1.05 * base_mean,
                report + fmt("ratio %.4f > 1.05", fold_mean / base_mean));
    }
    detail = report;
}

void c7_overhead_bound(const std::vector<DeskRun>& runs, std::string& detail) {
    std::vector<double> base, fold;
    for (const DeskRun& run : runs) {
        base.insert(base.end(), run.result.baseline.epoch_seconds.begin(),
                    run.result.baseline.epoch_seconds.end());
        fold.insert(fold.end(), run.result.folding.epoch_seconds.begin(),
                    run.result.folding.epoch_seconds.end());
    }
    const double pct = training_overhead(base, fold);
    require(std::isfinite(pct), "overhead not finite");
    require(pct < 25.0, fmt("overhead %.2f%% >= 25%%", pct));
    detail = fmt("per-epoch overhead %.2f%% over %zu epochs", pct, base.size());
}

// ---------------------------------------------------------------- 8
void c8_metric_oracles(std::string& detail) {
    ModelConfig cfg;
    cfg.vocab_size = 256;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq = 16;
    Parameters p = init_parameters(cfg);
    p.for_each([](const std::string&, Mat& m) { m.fill(0.0); });
    std::vector<std::size_t> corpus(64);
    RngState rng(8);
    for (auto& t : corpus) t = static_cast<std::size_t>(rng_below(rng, 256));
    const double ppl = perplexity(p, cfg, corpus);
    require(std::abs(ppl - 256.0) / 256.0 < 1e-9,
            fmt("uniform perplexity %.9f != vocab 256", ppl));

    ForwardTrace tr;
    tr.ffn_activation.push_back(Mat(4, 8));
    require(activation_sparsity(tr, 0, 1e-3) == 1.0, "all-zero sparsity != 1");

    require(token_reordering_frequency({4, 5, 6}, {4, 5, 6}) == 0.0,
            "identical sequences reorder != 0");
    const double r = token_reordering_frequency({1, 2, 3}, {1, 3, 2});
    require(std::abs(r - 100.0 / 3.0) <= 0.01, fmt("abc/acb reorder %.4f != 33.33", r));
    detail = fmt("ppl=%.6f sparsity=1 reorder(abc,acb)=%.2f%%", ppl, r);
}

// ---------------------------------------------------------------- 9
void c9_noop_configuration(std::string& detail) {
    FoldingConfig cfg;
    cfg.eta = 0.0;
    cfg.depth = 3;
    cfg.clusters = 2;
    // axis-aligned rows have exactly unit norm
    Mat x(6, 5);
    for (std::size_t i = 0; i < 6; ++i) x(i, i % 5) = i % 2 == 0 ? 1.0 : -1.0;
    std::vector<FoldingLayer> layers(cfg.depth, FoldingLayer(5, cfg.clusters));
    const FoldTrace trace = fold(x, layers, cfg);
    const Mat& out = trace.embeddings.back();
    for (std::size_t i = 0; i < x.size(); ++i)
        require(out.raw()[i] == x.raw()[i], fmt("entry %zu differs", i));
    detail = "fold output bit-identical to input";
}

// ---------------------------------------------------------------- 10
void c10_compare_determinism(const fs::path& work, const std::string& cli, std::string& detail) {
    const fs::path dir = work / "determinism";
    fs::create_directories(dir);
    write_file((dir / "alpha.txt").string(), synth_corpus("technical", 16384, 21));
    write_file((dir / "beta.txt").string(), synth_corpus("narrative", 16384, 22));

    nlohmann::json cfg;
    cfg["schema_version"] = 1;
    cfg["model"] = {{"d_model", 32},   {"n_layers", 2}, {"n_heads", 2}, {"d_ff", 64},
                    {"max_seq", 32},   {"fold_layers", {1}}, {"seed", 9},
                    {"folding", {{"clusters", 2}}}};
    cfg["data"] = {{"alpha", (dir / "alpha.txt").string()},
                   {"beta", (dir / "beta.txt").string()}};
    cfg["training"] = {{"epochs", 1}, {"batch_size", 8}, {"window", 32}, {"seed", 9}};
    cfg["metrics"] = {{"trace_windows", 2}, {"prompts_per_category", 2}, {"prompt_len", 8},
                      {"reorder_gen", 16}};
    cfg["output_dir"] = (dir / "out").string();
    write_file((dir / "config.json").string(), cfg.dump(2));

    const std::vector<std::string> files = {"metrics.json", "variance.csv", "heads.csv",
                                            "reorder.csv"};
    const std::string cmd =
        cli + " compare --config " + (dir / "config.json").string() + " > /dev/null 2>&1";
    require(std::system(cmd.c_str()) == 0, "first compare run failed");
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(slurp(dir / "out" / f));
    require(std::system(cmd.c_str()) == 0, "second compare run failed");
    for (std::size_t i = 0; i < files.size(); ++i) {
        require(slurp(dir / "out" / files[i]) == first[i], files[i] + " differs between runs");
    }
    detail = "metrics.json, variance.csv, heads.csv, reorder.csv byte-identical";
}

// ---------------------------------------------------------------- 11
void c11_center_optimality(std::string& detail) {
    RngState rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng_below(rng, 16));
        const std::size_t k = 1 + static_cast<std::size_t>(rng_below(rng, 4));
        const std::size_t d = 1 + static_cast<std::size_t>(rng_below(rng, 4));
        Mat x(n, d);
        for (double& v : x.raw()) v = rng_gaussian(rng);
        Mat prev(k, d);
        for (double& v : prev.raw()) v = rng_gaussian(rng);
        std::vector<std::size_t> assignment(n);
        for (auto& a : assignment) a = static_cast<std::size_t>(rng_below(rng, k));

        const Mat got = update_centers(x, assignment, k, prev);
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
                if (assignment[i] == c) members.push_back(i);
            for (std::size_t j = 0; j < d; ++j) {
                double expected;
                if (members.empty()) {
                    expected = prev(c, j);
                } else {
                    double s = 0.0;
                    for (std::size_t i : members) s += x(i, j);
                    expected = s / static_cast<double>(members.size());
                }
                worst = std::max(worst, std::abs(got(c, j) - expected));
            }
        }
    }
    require(worst <= 1e-12, fmt("max deviation from brute-force means %.3g > 1e-12", worst));
    detail = fmt("20 instances, max deviation %.3g", worst);
}

}  // namespace

int main(int, char** argv) {
    const fs::path self = fs::absolute(argv[0]);
    const fs::path cli_path = self.parent_path().parent_path() / "tools" / "foldlm";
    const fs::path work = fs::temp_directory_path() / "foldlm_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    int failures = 0;
    auto run_criterion = [&](int number, const std::string& title,
                             const std::function<void(std::string&)>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            body(detail);
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %2d (%s): %s [%.1fs]\n", ok ? "PASS" : "FAIL", number,
                    title.c_str(), detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    };

    run_criterion(1, "analytic gradient vs finite differences", c1_gradient_oracle);
    run_criterion(2, "full micro-model gradient check", c2_full_model_gradient);
    run_criterion(3, "identity at initialization", c3_identity_at_init);
    run_criterion(4, "flow energy descent", c4_energy_descent);

    std::vector<DeskRun> runs;
    bool desk_ok = true;
    {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            runs = desk_runs(work / "desk");
        } catch (const std::exception& e) {
            desk_ok = false;
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("FAIL criteria 5-7 (desk-scale training runs): %s [%.1fs]\n", e.what(),
                        secs);
            failures += 3;
        }
        if (desk_ok) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("desk-scale training: 3 seeds x (baseline + folding), %.1fs wall\n",
                        secs);
        }
    }
    if (desk_ok) {
        run_criterion(5, "variance direction",
                      [&](std::string& d) { c5_variance_direction(runs, d); });
        run_criterion(6, "perplexity non-degradation",
                      [&](std::string& d) { c6_perplexity_bound(runs, d); });
        run_criterion(7, "training overhead bound",
                      [&](std::string& d) { c7_overhead_bound(runs, d); });
    }

    run_criterion(8, "metric oracles", c8_metric_oracles);
    run_criterion(9, "folding no-op configuration", c9_noop_configuration);
    run_criterion(10, "compare determinism", [&](std::string& d) {
        c10_compare_determinism(work, cli_path.string(), d);
    });
    run_criterion(11, "center update optimality", c11_center_optimality);

    fs::remove_all(work);
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
