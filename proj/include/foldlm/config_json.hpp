#pragma once

#include <string>

#include <json.hpp>

#include "foldlm/model.hpp"
#include "foldlm/train.hpp"

namespace foldlm {

inline nlohmann::json folding_to_json(const FoldingConfig& f) {
    nlohmann::json j;
    j["alpha"] = f.alpha;
    j["beta"] = f.beta;
    j["gamma"] = f.gamma;
    j["lambda"] = f.lambda;
    j["eta"] = f.eta;
    j["depth"] = f.depth;
    j["clusters"] = f.clusters;
    j["sigma"] = f.sigma;
    j["flow_dt"] = f.flow_dt;
    j["inner_steps"] = f.inner_steps;
    return j;
}

inline FoldingConfig folding_from_json(const nlohmann::json& j) {
    FoldingConfig f;
    f.alpha = j.value("alpha", f.alpha);
    f.beta = j.value("beta", f.beta);
    f.gamma = j.value("gamma", f.gamma);
    f.lambda = j.value("lambda", f.lambda);
    f.eta = j.value("eta", f.eta);
    f.depth = j.value("depth", f.depth);
    f.clusters = j.value("clusters", f.clusters);
    f.sigma = j.value("sigma", f.sigma);
    f.flow_dt = j.value("flow_dt", f.flow_dt);
    f.inner_steps = j.value("inner_steps", f.inner_steps);
    return f;
}

inline nlohmann::json model_to_json(const ModelConfig& m) {
    nlohmann::json j;
    j["vocab_size"] = m.vocab_size;
    j["d_model"] = m.d_model;
    j["n_layers"] = m.n_layers;
    j["n_heads"] = m.n_heads;
    j["d_ff"] = m.d_ff;
    j["max_seq"] = m.max_seq;
    j["fold_enabled"] = m.fold_enabled;
    j["fold_layers"] = m.fold_layers;
    j["folding"] = folding_to_json(m.folding);
    j["seed"] = m.seed;
    return j;
}

inline ModelConfig model_from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.vocab_size = j.value("vocab_size", m.vocab_size);
    m.d_model = j.value("d_model", m.d_model);
    m.n_layers = j.value("n_layers", m.n_layers);
    m.n_heads = j.value("n_heads", m.n_heads);
    m.d_ff = j.value("d_ff", m.d_ff);
    m.max_seq = j.value("max_seq", m.max_seq);
    m.fold_enabled = j.value("fold_enabled", m.fold_enabled);
    if (j.contains("fold_layers")) {
        m.fold_layers = j.at("fold_layers").get<std::vector<std::size_t>>();
    } else {
        m.fold_layers = ModelConfig::default_fold_layers(m.n_layers);
    }
    if (j.contains("folding")) m.folding = folding_from_json(j.at("folding"));
    m.seed = j.value("seed", m.seed);
    m.validate();
    return m;
}

inline nlohmann::json optim_to_json(const OptimConfig& o) {
    nlohmann::json j;
    j["lr"] = o.lr;
    j["beta1"] = o.beta1;
    j["beta2"] = o.beta2;
    j["eps"] = o.eps;
    j["clip"] = o.clip;
    j["center_refresh"] = o.center_refresh;
    j["freeze_gates"] = o.freeze_gates;
    j["threads"] = o.threads;
    return j;
}

inline OptimConfig optim_from_json(const nlohmann::json& j) {
    OptimConfig o;
    o.lr = j.value("lr", o.lr);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.eps = j.value("eps", o.eps);
    o.clip = j.value("clip", o.clip);
    o.center_refresh = j.value("center_refresh", o.center_refresh);
    o.freeze_gates = j.value("freeze_gates", o.freeze_gates);
    o.threads = j.value("threads", o.threads);
    return o;
}

}  // namespace foldlm
