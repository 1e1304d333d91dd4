#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "foldlm/checkpoint.hpp"
#include "foldlm/model.hpp"
#include "foldlm/numdiff.hpp"

using namespace foldlm;

namespace {

ModelConfig tiny_config(bool fold) {
    ModelConfig cfg;
    cfg.vocab_size = 64;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_seq = 16;
    cfg.fold_enabled = fold;
    cfg.fold_layers = {1};
    cfg.folding.clusters = 2;
    cfg.seed = 99;
    return cfg;
}

std::vector<std::size_t> random_tokens(std::size_t n, std::size_t vocab, RngState& rng) {
    std::vector<std::size_t> out(n);
    for (auto& t : out) t = static_cast<std::size_t>(rng_below(rng, vocab));
    return out;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
    return m;
}

}  // namespace

TEST_CASE("tokenize byte values and round trip") {
    auto ids = tokenize("ab");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == 97);
    CHECK(ids[1] == 98);
    CHECK(tokenize("").empty());

    RngState rng(31);
    std::string blob(1024, '\0');
    for (char& c : blob) c = static_cast<char>(rng_below(rng, 256));
    CHECK(detokenize(tokenize(blob)) == blob);

    CHECK_THROWS_AS(detokenize({kBosToken}), DecodeError);
}

TEST_CASE("fold-enabled model at init matches fold-disabled logits") {
    ModelConfig with = tiny_config(true);
    ModelConfig without = tiny_config(false);
    Parameters pw = init_parameters(with);
    Parameters po = init_parameters(without);

    RngState rng(32);
    for (int trial = 0; trial < 4; ++trial) {
        auto tokens = random_tokens(10, with.vocab_size, rng);
        Mat lw = forward_logits(pw, with, tokens);
        Mat lo = forward_logits(po, without, tokens);
        CHECK(max_abs_diff(lw, lo) < 1e-6);
    }
}

TEST_CASE("causality: future tokens never change earlier logits") {
    ModelConfig cfg = tiny_config(true);
    Parameters p = init_parameters(cfg);
    // open the gates so the folding path is live
    for (auto& lp : p.layers) lp.fold.gate(0, 0) = 0.5;

    RngState rng(33);
    auto tokens = random_tokens(12, cfg.vocab_size, rng);
    Mat base = forward_logits(p, cfg, tokens);

    auto perturbed = tokens;
    perturbed[7] = (perturbed[7] + 11) % cfg.vocab_size;
    Mat changed = forward_logits(p, cfg, perturbed);

    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < base.cols(); ++j)
            CHECK(base(i, j) == changed(i, j));

    // sanity: the perturbed position itself must differ
    double diff = 0.0;
    for (std::size_t j = 0; j < base.cols(); ++j)
        diff = std::max(diff, std::abs(base(7, j) - changed(7, j)));
    CHECK(diff > 0.0);
}

TEST_CASE("attention rows sum to one on random inputs") {
    ModelConfig cfg = tiny_config(true);
    Parameters p = init_parameters(cfg);
    for (auto& lp : p.layers) lp.fold.gate(0, 0) = 0.3;
    RngState rng(34);
    auto tokens = random_tokens(9, cfg.vocab_size, rng);
    auto [logits, trace] = forward(p, cfg, tokens);
    REQUIRE(trace.attention.size() == cfg.n_layers);
    for (const auto& layer : trace.attention) {
        REQUIRE(layer.size() == cfg.n_heads);
        for (const Mat& att : layer) {
            for (std::size_t i = 0; i < att.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < att.cols(); ++j) {
                    sum += att(i, j);
                    if (j > i) CHECK(att(i, j) == 0.0);
                }
                CHECK(sum == Catch::Approx(1.0).margin(1e-6));
            }
        }
    }
}

TEST_CASE("uniform-zero parameters give uniform logits rows") {
    ModelConfig cfg = tiny_config(false);
    Parameters p = init_parameters(cfg);
    p.for_each([](const std::string&, Mat& m) { m.fill(0.0); });
    Mat logits = forward_logits(p, cfg, {1, 2, 3});
    for (std::size_t i = 0; i < logits.rows(); ++i)
        for (std::size_t j = 0; j < logits.cols(); ++j) CHECK(logits(i, j) == 0.0);
}

TEST_CASE("forward rejects overlong and empty input") {
    ModelConfig cfg = tiny_config(false);
    Parameters p = init_parameters(cfg);
    CHECK_THROWS_AS(forward_logits(p, cfg, std::vector<std::size_t>(cfg.max_seq + 1, 0)),
                    ConfigError);
    CHECK_THROWS_AS(forward_logits(p, cfg, {}), ConfigError);
}

TEST_CASE("loss on uniform and one-hot logits") {
    Mat uniform(3, 256, std::vector<double>(3 * 256, 0.125));
    CHECK(loss(uniform, {5, 99, 200}) == Catch::Approx(std::log(256.0)).epsilon(1e-12));

    Mat onehot(2, 8);
    onehot(0, 3) = 50.0;
    onehot(1, 6) = 50.0;
    CHECK(loss(onehot, {3, 6}) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("loss matches brute-force per-position log-softmax") {
    RngState rng(35);
    Mat logits(4, 6);
    for (double& v : logits.raw()) v = rng_gaussian(rng);
    std::vector<std::size_t> targets = {2, 0, 5, 1};
    double expected = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 6; ++j) z += std::exp(logits(i, j));
        expected += -std::log(std::exp(logits(i, targets[i])) / z);
    }
    expected /= 4.0;
    CHECK(loss(logits, targets) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("tape fold module with open gate matches plain fold_step") {
    // gate 1 and an identity stabilizer reduce the module to one fold_step
    const std::size_t d = 6;
    FoldingConfig fcfg;
    fcfg.alpha = 0.8;
    fcfg.beta = 0.3;
    fcfg.gamma = 0.4;
    fcfg.eta = 0.05;
    fcfg.clusters = 2;

    RngState rng(36);
    Mat x(5, d);
    for (double& v : x.raw()) v = rng_gaussian(rng);

    FoldParams fp;
    fp.w_f = Mat::identity(d);
    for (double& v : fp.w_f.raw()) v += 0.01 * rng_gaussian(rng);
    fp.b_f = Mat(1, d);
    for (double& v : fp.b_f.raw()) v = 0.1 * rng_gaussian(rng);
    fp.centers = Mat(2, d);
    for (double& v : fp.centers.raw()) v = rng_gaussian(rng);
    fp.gate = Mat(1, 1, 1.0);
    fp.stab_scale = Mat(1, d, 1.0);
    fp.stab_shift = Mat(1, d);

    Tape t(false);
    FoldParamIds ids;
    ids.w_f = t.leaf(fp.w_f);
    ids.b_f = t.leaf(fp.b_f);
    ids.centers = t.leaf(fp.centers);
    ids.gate = t.leaf(fp.gate);
    ids.stab_scale = t.leaf(fp.stab_scale);
    ids.stab_shift = t.leaf(fp.stab_shift);
    VarId xid = t.leaf(x);
    FoldModuleNodes out = tape_fold_module(t, xid, ids, fcfg, /*causal=*/false);

    FoldingLayer layer;
    layer.w_f = fp.w_f;
    layer.b_f = fp.b_f;
    layer.centers = fp.centers;
    Mat expected = fold_step(x, layer, fcfg);
    CHECK(max_abs_diff(t.val(out.out), expected) < 1e-12);
}

TEST_CASE("checkpoint round trip is byte-identical and lossless") {
    ModelConfig cfg = tiny_config(true);
    Parameters p = init_parameters(cfg);
    RngState rng(37);
    // make the state non-trivial
    p.tok_embed(3, 3) = 1234.56789;
    for (auto& lp : p.layers) lp.fold.gate(0, 0) = 0.25;

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "foldlm_ckpt_test";
    fs::create_directories(dir);
    const std::string p1 = (dir / "a.ckpt").string();
    const std::string p2 = (dir / "b.ckpt").string();

    save_checkpoint(p1, cfg, p);
    auto [cfg2, loaded] = load_checkpoint(p1);
    save_checkpoint(p2, cfg2, loaded);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    auto tokens = random_tokens(8, cfg.vocab_size, rng);
    CHECK(max_abs_diff(forward_logits(p, cfg, tokens), forward_logits(loaded, cfg2, tokens)) <=
          1e-12);

    // corrupt the magic: load must fail without producing anything
    std::string corrupted = s1;
    corrupted[0] = 'X';
    const std::string p3 = (dir / "c.ckpt").string();
    std::ofstream(p3, std::ios::binary) << corrupted;
    CHECK_THROWS_AS(load_checkpoint(p3), FormatError);

    // truncation is a format error too
    const std::string p4 = (dir / "d.ckpt").string();
    std::ofstream(p4, std::ios::binary) << s1.substr(0, s1.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(p4), FormatError);
    fs::remove_all(dir);
}
