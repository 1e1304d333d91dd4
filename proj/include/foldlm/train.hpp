#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "foldlm/model.hpp"

namespace foldlm {

/// Adaptive optimizer settings. Defaults: Adam with step 1e-3, moment
/// decays 0.9/0.999, stabilizer 1e-8, global-norm gradient clip at 1.0.
struct OptimConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 1.0;
    std::size_t center_refresh = 50;  // steps between k-means center refreshes (0 = off)
    bool freeze_gates = false;
    std::size_t threads = 2;  // fixed default so summation order is reproducible
};

struct AdamState {
    std::vector<Mat> m;
    std::vector<Mat> v;
    std::uint64_t t = 0;
};

namespace detail {

struct ChunkResult {
    std::vector<Mat> grads;
    double loss_sum = 0.0;
    // fold-layer inputs captured per window, in window order
    std::vector<std::vector<Mat>> fold_inputs;  // [window][fold slot]
};

inline ChunkResult run_chunk(const Parameters& params, const ModelConfig& cfg,
                             const std::vector<std::vector<std::size_t>>& batch,
                             std::size_t begin, std::size_t end) {
    Tape t;
    ParamIds ids = register_params(t, params);
    ChunkResult res;
    VarId total{};
    for (std::size_t w = begin; w < end; ++w) {
        const std::vector<std::size_t>& window = batch[w];
        if (window.size() < 2) throw TrainingError("window shorter than 2 tokens");
        std::vector<std::size_t> inputs(window.begin(), window.end() - 1);
        std::vector<std::size_t> targets(window.begin() + 1, window.end());
        GraphNodes g = build_forward(t, ids, cfg, inputs);
        VarId nll = t.cross_entropy_mean(g.logits, targets);
        total = total.valid() ? t.add(total, nll) : nll;
        res.loss_sum += t.val(nll)(0, 0);

        std::vector<Mat> finputs;
        for (VarId f : g.fold_input)
            if (f.valid()) finputs.push_back(t.val(f));
        res.fold_inputs.push_back(std::move(finputs));
    }
    t.backward(total);
    res.grads.reserve(ids.flat.size());
    for (VarId p : ids.flat) res.grads.push_back(t.grad(p));
    return res;
}

}  // namespace detail

/// Sequential-step trainer. Each step computes exact gradients of the mean
/// batch loss for every tensor (folding parameters included), applies a
/// clipped Adam update, projects gates back into [0, 1], and periodically
/// refreshes cluster centers k-means style from recently seen fold-layer
/// inputs. Window gradients are accumulated in a fixed order, so a run is
/// bit-reproducible for a given seed, data, and thread setting.
class Trainer {
public:
    Trainer(Parameters& params, const ModelConfig& cfg, OptimConfig opt = {})
        : params_(params), cfg_(cfg), opt_(opt) {
        cfg_.validate();
        params_.for_each([&](const std::string& name, Mat& m) {
            names_.push_back(name);
            tensors_.push_back(&m);
        });
        adam_.m.reserve(tensors_.size());
        adam_.v.reserve(tensors_.size());
        for (Mat* m : tensors_) {
            adam_.m.emplace_back(m->rows(), m->cols());
            adam_.v.emplace_back(m->rows(), m->cols());
        }
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i].ends_with(".gate")) gate_idx_.push_back(i);
            if (names_[i].ends_with(".centers")) center_idx_.push_back(i);
        }
        if (cfg_.fold_enabled) {
            std::size_t slots = 0;
            for (std::size_t l = 0; l < cfg_.n_layers; ++l)
                if (cfg_.is_fold_layer(l)) ++slots;
            buffers_.resize(slots);
        }
    }

    std::uint64_t steps_done() const { return adam_.t; }

    /// One optimizer step over a batch of token windows; returns the mean
    /// window loss in nats.
    double step(const std::vector<std::vector<std::size_t>>& batch) {
        if (batch.empty()) throw TrainingError("empty batch");
        const std::size_t nthreads =
            std::max<std::size_t>(1, std::min(opt_.threads, batch.size()));

        std::vector<detail::ChunkResult> results(nthreads);
        std::vector<std::exception_ptr> errors(nthreads);
        {
            std::vector<std::thread> pool;
            const std::size_t per = (batch.size() + nthreads - 1) / nthreads;
            for (std::size_t c = 0; c < nthreads; ++c) {
                const std::size_t b = c * per;
                const std::size_t e = std::min(batch.size(), b + per);
                if (b >= e) continue;
                pool.emplace_back([&, c, b, e]() {
                    try {
                        results[c] = detail::run_chunk(params_, cfg_, batch, b, e);
                    } catch (...) {
                        errors[c] = std::current_exception();
                    }
                });
            }
            for (std::thread& th : pool) th.join();
        }
        for (std::exception_ptr& err : errors)
            if (err) std::rethrow_exception(err);

        // fixed-order reduction keeps results independent of scheduling
        std::vector<Mat> grads;
        grads.reserve(tensors_.size());
        for (Mat* m : tensors_) grads.emplace_back(m->rows(), m->cols());
        double loss_sum = 0.0;
        for (const detail::ChunkResult& r : results) {
            if (r.grads.empty()) continue;
            loss_sum += r.loss_sum;
            for (std::size_t i = 0; i < grads.size(); ++i) axpy(grads[i], 1.0, r.grads[i]);
        }
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (Mat& g : grads)
            for (double& v : g.raw()) v *= inv_b;
        const double mean_loss = loss_sum * inv_b;

        const std::uint64_t step_index = adam_.t + 1;
        if (!std::isfinite(mean_loss))
            throw TrainingError("non-finite loss at step " + std::to_string(step_index));

        if (opt_.freeze_gates)
            for (std::size_t i : gate_idx_) grads[i].fill(0.0);

        double sq = 0.0;
        for (const Mat& g : grads)
            for (double v : g.raw()) sq += v * v;
        if (!std::isfinite(sq))
            throw TrainingError("non-finite gradient at step " + std::to_string(step_index));
        const double norm = std::sqrt(sq);
        if (opt_.clip > 0.0 && norm > opt_.clip) {
            const double s = opt_.clip / norm;
            for (Mat& g : grads)
                for (double& v : g.raw()) v *= s;
        }

        adam_.t = step_index;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(adam_.t));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(adam_.t));
        for (std::size_t i = 0; i < tensors_.size(); ++i) {
            Mat& p = *tensors_[i];
            Mat& m = adam_.m[i];
            Mat& v = adam_.v[i];
            const Mat& g = grads[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double gj = g.raw()[j];
                m.raw()[j] = opt_.beta1 * m.raw()[j] + (1.0 - opt_.beta1) * gj;
                v.raw()[j] = opt_.beta2 * v.raw()[j] + (1.0 - opt_.beta2) * gj * gj;
                const double mhat = m.raw()[j] / bc1;
                const double vhat = v.raw()[j] / bc2;
                p.raw()[j] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
            }
        }
        for (std::size_t i : gate_idx_) {
            double& gate = tensors_[i]->raw()[0];
            gate = std::clamp(gate, 0.0, 1.0);
        }
        if (!params_.all_finite())
            throw TrainingError("non-finite parameters at step " + std::to_string(step_index));

        if (cfg_.fold_enabled) {
            append_fold_inputs(results);
            if (opt_.center_refresh > 0 && adam_.t % opt_.center_refresh == 0) refresh_centers();
        }
        return mean_loss;
    }

private:
    void append_fold_inputs(const std::vector<detail::ChunkResult>& results) {
        constexpr std::size_t kBufferRows = 1024;
        for (const detail::ChunkResult& r : results) {
            for (const std::vector<Mat>& per_window : r.fold_inputs) {
                for (std::size_t slot = 0; slot < per_window.size(); ++slot) {
                    const Mat& rows = per_window[slot];
                    auto& buf = buffers_[slot];
                    for (std::size_t i = 0; i < rows.rows(); ++i)
                        buf.emplace_back(rows.row(i), rows.row(i) + rows.cols());
                    if (buf.size() > kBufferRows)
                        buf.erase(buf.begin(), buf.begin() + (buf.size() - kBufferRows));
                }
            }
        }
    }

    void refresh_centers() {
        std::size_t slot = 0;
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            if (!cfg_.is_fold_layer(l)) continue;
            Mat& centers = params_.layers[l].fold.centers;
            const auto& buf = buffers_[slot];
            if (buf.size() >= centers.rows()) {
                Mat data(buf.size(), centers.cols());
                for (std::size_t i = 0; i < buf.size(); ++i)
                    for (std::size_t j = 0; j < centers.cols(); ++j) data(i, j) = buf[i][j];
                const auto assignment = assign_clusters(data, centers);
                centers = update_centers(data, assignment, centers.rows(), centers);
                // moments no longer describe the jumped parameter
                for (std::size_t i : center_idx_) {
                    if (tensors_[i] == &centers) {
                        adam_.m[i].fill(0.0);
                        adam_.v[i].fill(0.0);
                    }
                }
            }
            ++slot;
        }
    }

    Parameters& params_;
    ModelConfig cfg_;
    OptimConfig opt_;
    AdamState adam_;
    std::vector<std::string> names_;
    std::vector<Mat*> tensors_;
    std::vector<std::size_t> gate_idx_;
    std::vector<std::size_t> center_idx_;
    std::vector<std::vector<std::vector<double>>> buffers_;  // per fold slot, newest rows last
};

enum class GenMode { greedy, sampled };

/// Autoregressive generation. Greedy picks the argmax (lowest id wins ties);
/// sampled draws from the softmax with a seeded RNG. Returns prompt plus
/// generated ids.
inline std::vector<std::size_t> generate(const Parameters& p, const ModelConfig& cfg,
                                         const std::vector<std::size_t>& prompt,
                                         std::size_t max_new, GenMode mode,
                                         std::uint64_t seed = 0) {
    if (prompt.empty()) throw ConfigError("generate: prompt must be nonempty");
    std::vector<std::size_t> out = prompt;
    RngState rng(seed);
    for (std::size_t s = 0; s < max_new; ++s) {
        const std::size_t start = out.size() > cfg.max_seq ? out.size() - cfg.max_seq : 0;
        const std::vector<std::size_t> window(out.begin() + start, out.end());
        const Mat logits = forward_logits(p, cfg, window);
        const std::size_t last = logits.rows() - 1;
        std::size_t next = 0;
        if (mode == GenMode::greedy) {
            double best = logits(last, 0);
            for (std::size_t j = 1; j < logits.cols(); ++j) {
                if (logits(last, j) > best) {
                    best = logits(last, j);
                    next = j;
                }
            }
        } else {
            double m = logits(last, 0);
            for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(last, j));
            double z = 0.0;
            for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(logits(last, j) - m);
            const double u = rng_uniform(rng) * z;
            double acc = 0.0;
            next = logits.cols() - 1;
            for (std::size_t j = 0; j < logits.cols(); ++j) {
                acc += std::exp(logits(last, j) - m);
                if (u < acc) {
                    next = j;
                    break;
                }
            }
        }
        out.push_back(next);
    }
    return out;
}

}  // namespace foldlm
