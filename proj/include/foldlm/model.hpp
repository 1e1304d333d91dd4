#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "foldlm/folding.hpp"
#include "foldlm/mat.hpp"
#include "foldlm/rng.hpp"
#include "foldlm/tape.hpp"

namespace foldlm {

constexpr std::size_t kByteVocab = 256;
constexpr std::size_t kBosToken = 256;
constexpr std::size_t kEosToken = 257;
constexpr std::size_t kDefaultVocab = 258;  // bytes + reserved specials

/// Byte-level tokenizer: ids 0..255 are raw bytes, 256/257 are reserved
/// special tokens that never appear in encoded text.
inline std::vector<std::size_t> tokenize(std::string_view text) {
    std::vector<std::size_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<std::size_t>(c));
    return ids;
}

inline std::string detokenize(const std::vector<std::size_t>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (std::size_t id : ids) {
        if (id >= kByteVocab) {
            throw DecodeError("token id " + std::to_string(id) + " is not a byte");
        }
        out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

struct ModelConfig {
    std::size_t vocab_size = kDefaultVocab;
    std::size_t d_model = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t max_seq = 128;
    bool fold_enabled = false;
    std::vector<std::size_t> fold_layers;  // sorted, unique
    FoldingConfig folding;
    std::uint64_t seed = 1;

    void validate() const {
        if (d_model == 0 || n_heads == 0 || n_layers == 0 || vocab_size == 0 || max_seq == 0)
            throw ConfigError("model dimensions must be positive");
        if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
        for (std::size_t l : fold_layers)
            if (l >= n_layers) throw ConfigError("fold layer index out of range");
        folding.validate(d_model);
    }

    bool is_fold_layer(std::size_t l) const {
        for (std::size_t f : fold_layers)
            if (f == l) return true;
        return false;
    }

    /// Default placement when folding is on and no layers were chosen:
    /// every odd-indexed layer (layer 0 for a single-layer model).
    static std::vector<std::size_t> default_fold_layers(std::size_t n_layers) {
        std::vector<std::size_t> out;
        for (std::size_t l = 0; l < n_layers; ++l)
            if (l % 2 == 1) out.push_back(l);
        if (out.empty() && n_layers > 0) out.push_back(0);
        return out;
    }
};

/// Folding-module parameters carried by every layer. Identity at
/// construction: W_f = I, b_f = 0, gate = 0, stabilizer scale 1 / shift 0.
struct FoldParams {
    Mat w_f;
    Mat b_f;
    Mat centers;
    Mat gate;        // 1 x 1, kept in [0, 1]
    Mat stab_scale;  // 1 x d
    Mat stab_shift;  // 1 x d
};

struct LayerParams {
    Mat ln1_g, ln1_b;
    Mat wq, wk, wv, wo;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
    FoldParams fold;
};

/// All trainable tensors. The output projection is tied to tok_embed.
struct Parameters {
    Mat tok_embed;  // vocab x d_model
    std::vector<LayerParams> layers;

    /// Visit every tensor with a stable name, in a fixed order shared by the
    /// optimizer, the checkpoint format, and gradient collection.
    template <class F>
    void for_each(F&& f) {
        f("tok_embed", tok_embed);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layers." + std::to_string(l) + ".";
            LayerParams& lp = layers[l];
            f(p + "ln1_g", lp.ln1_g);
            f(p + "ln1_b", lp.ln1_b);
            f(p + "wq", lp.wq);
            f(p + "wk", lp.wk);
            f(p + "wv", lp.wv);
            f(p + "wo", lp.wo);
            f(p + "ln2_g", lp.ln2_g);
            f(p + "ln2_b", lp.ln2_b);
            f(p + "w1", lp.w1);
            f(p + "b1", lp.b1);
            f(p + "w2", lp.w2);
            f(p + "b2", lp.b2);
            f(p + "fold.w_f", lp.fold.w_f);
            f(p + "fold.b_f", lp.fold.b_f);
            f(p + "fold.centers", lp.fold.centers);
            f(p + "fold.gate", lp.fold.gate);
            f(p + "fold.stab_scale", lp.fold.stab_scale);
            f(p + "fold.stab_shift", lp.fold.stab_shift);
        }
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<Parameters*>(this)->for_each(
            [&](const std::string& name, Mat& m) { f(name, const_cast<const Mat&>(m)); });
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&](const std::string&, const Mat& m) { ok = ok && m.all_finite(); });
        return ok;
    }
};

/// Seeded initialization. Folding tensors exist on every layer regardless of
/// fold_enabled so a baseline and a folding model built from the same seed
/// share every weight bit for bit.
inline Parameters init_parameters(const ModelConfig& cfg) {
    cfg.validate();
    RngState rng(cfg.seed);
    const double init_std = 0.02;
    auto gauss_mat = [&](std::size_t r, std::size_t c) {
        Mat m(r, c);
        for (double& v : m.raw()) v = init_std * rng_gaussian(rng);
        return m;
    };

    Parameters p;
    p.tok_embed = gauss_mat(cfg.vocab_size, cfg.d_model);
    p.layers.resize(cfg.n_layers);
    for (LayerParams& lp : p.layers) {
        lp.ln1_g = Mat(1, cfg.d_model, 1.0);
        lp.ln1_b = Mat(1, cfg.d_model);
        lp.wq = gauss_mat(cfg.d_model, cfg.d_model);
        lp.wk = gauss_mat(cfg.d_model, cfg.d_model);
        lp.wv = gauss_mat(cfg.d_model, cfg.d_model);
        lp.wo = gauss_mat(cfg.d_model, cfg.d_model);
        lp.ln2_g = Mat(1, cfg.d_model, 1.0);
        lp.ln2_b = Mat(1, cfg.d_model);
        lp.w1 = gauss_mat(cfg.d_model, cfg.d_ff);
        lp.b1 = Mat(1, cfg.d_ff);
        lp.w2 = gauss_mat(cfg.d_ff, cfg.d_model);
        lp.b2 = Mat(1, cfg.d_model);

        FoldParams& fp = lp.fold;
        fp.w_f = Mat::identity(cfg.d_model);
        fp.b_f = Mat(1, cfg.d_model);
        fp.centers = Mat(cfg.folding.clusters, cfg.d_model);
        for (std::size_t k = 0; k < cfg.folding.clusters; ++k) {
            const std::size_t row = static_cast<std::size_t>(rng_below(rng, cfg.vocab_size));
            for (std::size_t j = 0; j < cfg.d_model; ++j) fp.centers(k, j) = p.tok_embed(row, j);
        }
        fp.gate = Mat(1, 1);
        fp.stab_scale = Mat(1, cfg.d_model, 1.0);
        fp.stab_shift = Mat(1, cfg.d_model);
    }
    return p;
}

struct FoldParamIds {
    VarId w_f, b_f, centers, gate, stab_scale, stab_shift;
};
struct LayerParamIds {
    VarId ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
    FoldParamIds fold;
};
struct ParamIds {
    VarId tok_embed;
    std::vector<LayerParamIds> layers;
    std::vector<VarId> flat;  // same order as Parameters::for_each
};

/// Register every parameter tensor as a tape leaf, mirroring the
/// Parameters::for_each order in `flat`.
inline ParamIds register_params(Tape& t, const Parameters& p) {
    ParamIds ids;
    ids.layers.resize(p.layers.size());
    auto reg = [&](const Mat& m) {
        VarId v = t.leaf(m);
        ids.flat.push_back(v);
        return v;
    };
    ids.tok_embed = reg(p.tok_embed);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& lp = p.layers[l];
        LayerParamIds& li = ids.layers[l];
        li.ln1_g = reg(lp.ln1_g);
        li.ln1_b = reg(lp.ln1_b);
        li.wq = reg(lp.wq);
        li.wk = reg(lp.wk);
        li.wv = reg(lp.wv);
        li.wo = reg(lp.wo);
        li.ln2_g = reg(lp.ln2_g);
        li.ln2_b = reg(lp.ln2_b);
        li.w1 = reg(lp.w1);
        li.b1 = reg(lp.b1);
        li.w2 = reg(lp.w2);
        li.b2 = reg(lp.b2);
        li.fold.w_f = reg(lp.fold.w_f);
        li.fold.b_f = reg(lp.fold.b_f);
        li.fold.centers = reg(lp.fold.centers);
        li.fold.gate = reg(lp.fold.gate);
        li.fold.stab_scale = reg(lp.fold.stab_scale);
        li.fold.stab_shift = reg(lp.fold.stab_shift);
    }
    return ids;
}

/// Sinusoidal position encoding (not a parameter). Scaled well below unit
/// magnitude so the embedding stream starts at the scale the folding
/// affinity kernel operates at; token embeddings grow past it as they train.
constexpr double kPosEncodingScale = 0.1;

inline const Mat& position_encoding(std::size_t seq, std::size_t d) {
    thread_local std::vector<std::pair<std::pair<std::size_t, std::size_t>, Mat>> cache;
    for (auto& e : cache)
        if (e.first.first == seq && e.first.second == d) return e.second;
    Mat pe(seq, d);
    for (std::size_t pos = 0; pos < seq; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe(pos, i) = kPosEncodingScale * std::sin(static_cast<double>(pos) * freq);
            if (i + 1 < d) pe(pos, i + 1) = kPosEncodingScale * std::cos(static_cast<double>(pos) * freq);
        }
    }
    cache.emplace_back(std::make_pair(seq, d), std::move(pe));
    return cache.back().second;
}

/// Graph-Laplacian smoothing as tape ops. With `causal` set, row i only sees
/// rows j < i, keeping the operator compatible with autoregressive masking.
inline VarId tape_laplacian(Tape& t, VarId x, bool causal) {
    VarId w = t.exp_neg_masked(t.pairwise_sqdist(x), causal);
    return t.sub(t.matmul(w, x), t.scale_rows(x, t.row_sums(w)));
}

struct FoldModuleNodes {
    VarId out;
    VarId transformed;  // post-affine embeddings, the space assignments live in
};

/// The folding residual module as tape ops:
///   out = stab(X + gate * (fold_core(X) - X))
/// where fold_core is one fold_step (affine, gradient adjustment, row
/// normalization) and stab is the per-dimension scale/shift stabilizer. At
/// identity initialization (gate 0, scale 1, shift 0) the module returns X
/// exactly.
inline FoldModuleNodes tape_fold_module(Tape& t, VarId x, const FoldParamIds& f,
                                        const FoldingConfig& cfg, bool causal) {
    VarId x1 = t.add_rowvec(t.matmul_nt(x, f.w_f), f.b_f);
    if (cfg.lambda > 0.0) x1 = t.add(x1, t.scale(tape_laplacian(t, x, causal), cfg.lambda));
    const VarId transformed = x1;
    for (std::size_t it = 0; it < cfg.inner_steps; ++it) {
        // Cluster assignment is a discrete choice over current values; no
        // gradient flows through it, only through the gathered centers.
        const std::vector<std::size_t> assignment =
            assign_clusters(t.val(x1), t.val(f.centers));
        VarId gathered = t.gather_rows(f.centers, assignment);
        VarId delta = t.scale(t.sub(gathered, x1), 2.0 * cfg.alpha);
        const double smooth = 4.0 * cfg.gamma + cfg.beta;
        if (smooth != 0.0)
            delta = t.add(delta, t.scale(tape_laplacian(t, x1, causal), smooth));
        x1 = t.add(x1, t.scale(delta, cfg.eta));
    }
    VarId folded = t.row_normalize_g(x1);
    VarId blended = t.add(x, t.scale_by_scalar(t.sub(folded, x), f.gate));
    return {t.affine_cols(blended, f.stab_scale, f.stab_shift), transformed};
}

/// Node handles for everything the metrics need from one forward pass.
struct GraphNodes {
    VarId input_embed;
    std::vector<VarId> residual;                    // per layer, end of layer
    std::vector<std::vector<VarId>> attention;      // per layer, per head
    std::vector<std::vector<VarId>> head_outputs;   // per layer, per head
    std::vector<VarId> ffn_activation;              // per layer
    std::vector<VarId> fold_input;                  // per layer (invalid if not folded)
    VarId logits;
};

/// Build the full forward graph for one token window. Pre-norm causal
/// decoder; folding modules run on the residual stream after the selected
/// layers' feed-forward addition; the output projection is tied to the
/// embedding table.
inline GraphNodes build_forward(Tape& t, const ParamIds& ids, const ModelConfig& cfg,
                                const std::vector<std::size_t>& tokens) {
    if (tokens.empty()) throw ConfigError("forward: empty token window");
    if (tokens.size() > cfg.max_seq) {
        throw ConfigError("forward: window length " + std::to_string(tokens.size()) +
                          " exceeds max_seq " + std::to_string(cfg.max_seq));
    }
    for (std::size_t id : tokens)
        if (id >= cfg.vocab_size) throw ConfigError("forward: token id out of range");

    const std::size_t n_heads = cfg.n_heads;
    const std::size_t dh = cfg.d_model / n_heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    GraphNodes g;
    VarId x = t.add_const(t.gather_rows(ids.tok_embed, tokens),
                          position_encoding(tokens.size(), cfg.d_model));
    g.input_embed = x;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerParamIds& lp = ids.layers[l];
        VarId xn = t.layer_norm(x, lp.ln1_g, lp.ln1_b);
        VarId q = t.matmul(xn, lp.wq);
        VarId k = t.matmul(xn, lp.wk);
        VarId v = t.matmul(xn, lp.wv);
        std::vector<VarId> contexts;
        std::vector<VarId> att_nodes;
        std::vector<VarId> head_nodes;
        for (std::size_t h = 0; h < n_heads; ++h) {
            VarId qh = t.col_slice(q, h * dh, (h + 1) * dh);
            VarId kh = t.col_slice(k, h * dh, (h + 1) * dh);
            VarId vh = t.col_slice(v, h * dh, (h + 1) * dh);
            VarId att = t.causal_softmax(t.scale(t.matmul_nt(qh, kh), att_scale));
            VarId ctx = t.matmul(att, vh);
            att_nodes.push_back(att);
            head_nodes.push_back(ctx);
            contexts.push_back(ctx);
        }
        x = t.add(x, t.matmul(t.concat_cols(contexts), lp.wo));

        VarId xn2 = t.layer_norm(x, lp.ln2_g, lp.ln2_b);
        VarId h1 = t.relu(t.add_rowvec(t.matmul(xn2, lp.w1), lp.b1));
        x = t.add(x, t.add_rowvec(t.matmul(h1, lp.w2), lp.b2));

        VarId fold_in{};
        if (cfg.fold_enabled && cfg.is_fold_layer(l)) {
            const FoldModuleNodes fm = tape_fold_module(t, x, lp.fold, cfg.folding,
                                                        /*causal=*/true);
            fold_in = fm.transformed;
            x = fm.out;
        }
        g.attention.push_back(std::move(att_nodes));
        g.head_outputs.push_back(std::move(head_nodes));
        g.ffn_activation.push_back(h1);
        g.fold_input.push_back(fold_in);
        g.residual.push_back(x);
    }
    g.logits = t.matmul_nt(x, ids.tok_embed);
    return g;
}

/// Activations captured from one forward pass; the raw material for all
/// layer metrics.
struct ForwardTrace {
    std::vector<std::size_t> input_tokens;
    std::vector<Mat> residual;
    std::vector<std::vector<Mat>> attention;
    std::vector<std::vector<Mat>> head_outputs;
    std::vector<Mat> ffn_activation;
    Mat logits;
};

inline ForwardTrace extract_trace(const Tape& t, const GraphNodes& g) {
    ForwardTrace tr;
    for (VarId r : g.residual) tr.residual.push_back(t.val(r));
    for (const auto& layer : g.attention) {
        std::vector<Mat> heads;
        for (VarId a : layer) heads.push_back(t.val(a));
        tr.attention.push_back(std::move(heads));
    }
    for (const auto& layer : g.head_outputs) {
        std::vector<Mat> heads;
        for (VarId h : layer) heads.push_back(t.val(h));
        tr.head_outputs.push_back(std::move(heads));
    }
    for (VarId f : g.ffn_activation) tr.ffn_activation.push_back(t.val(f));
    tr.logits = t.val(g.logits);
    return tr;
}

/// Forward pass returning logits and the full trace.
inline std::pair<Mat, ForwardTrace> forward(const Parameters& p, const ModelConfig& cfg,
                                            const std::vector<std::size_t>& tokens) {
    Tape t(false);
    ParamIds ids = register_params(t, p);
    GraphNodes g = build_forward(t, ids, cfg, tokens);
    ForwardTrace tr = extract_trace(t, g);
    tr.input_tokens = tokens;
    return {t.val(g.logits), std::move(tr)};
}

/// Logits only (no trace copies).
inline Mat forward_logits(const Parameters& p, const ModelConfig& cfg,
                          const std::vector<std::size_t>& tokens) {
    Tape t(false);
    ParamIds ids = register_params(t, p);
    GraphNodes g = build_forward(t, ids, cfg, tokens);
    return t.val(g.logits);
}

/// Mean next-token negative log-likelihood in nats.
inline double loss(const Mat& logits, const std::vector<std::size_t>& targets) {
    if (targets.size() != logits.rows()) throw ShapeError("loss: target count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (targets[i] >= logits.cols()) throw ShapeError("loss: target id out of range");
        double m = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - m);
        total += m + std::log(z) - logits(i, targets[i]);
    }
    return total / static_cast<double>(logits.rows());
}

}  // namespace foldlm
