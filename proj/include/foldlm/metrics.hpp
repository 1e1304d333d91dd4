#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "foldlm/model.hpp"

namespace foldlm {

/// Per-run measurement bundle: per-layer representation statistics,
/// per-category perplexity and reordering, and wall-clock epoch timings.
struct MetricsReport {
    std::vector<double> layer_variance;
    std::vector<double> head_utilization;  // percent
    std::vector<double> sparsity;          // fraction
    std::map<std::string, double> perplexity;
    std::map<std::string, double> reordering;  // percent
    std::map<std::string, std::vector<double>> perplexity_history;  // per epoch
    std::vector<double> epoch_seconds;
    std::string config_echo;  // JSON text of the run configuration
};

/// Mean squared distance of a layer's residual activations to their
/// centroid, normalized by n*d so widths are comparable.
inline double intra_layer_variance(const ForwardTrace& trace, std::size_t layer) {
    if (layer >= trace.residual.size()) throw MetricError("layer index out of range");
    const Mat& x = trace.residual[layer];
    if (x.rows() < 2) throw MetricError("intra_layer_variance needs at least 2 tokens");
    const Mat mean = row_mean(x);
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double d = x(i, j) - mean(0, j);
            s += d * d;
        }
    return s / static_cast<double>(x.rows() * x.cols());
}

/// Percentage of heads whose mean per-token output norm share is at least
/// tau of the uniform share 1/H.
inline double attention_head_utilization(const ForwardTrace& trace, std::size_t layer,
                                         double tau) {
    if (layer >= trace.head_outputs.size()) throw MetricError("layer index out of range");
    if (!(tau > 0.0) || tau > 1.0) throw MetricError("tau must be in (0, 1]");
    const auto& heads = trace.head_outputs[layer];
    const std::size_t h_count = heads.size();
    std::vector<double> mean_norm(h_count, 0.0);
    double total = 0.0;
    for (std::size_t h = 0; h < h_count; ++h) {
        const Mat& out = heads[h];
        double s = 0.0;
        for (std::size_t i = 0; i < out.rows(); ++i) s += std::sqrt(row_sqnorm(out, i));
        mean_norm[h] = s / static_cast<double>(out.rows());
        total += mean_norm[h];
    }
    if (total == 0.0) return 0.0;
    const double threshold = tau / static_cast<double>(h_count);
    std::size_t active = 0;
    for (double m : mean_norm)
        if (m / total >= threshold) ++active;
    return 100.0 * static_cast<double>(active) / static_cast<double>(h_count);
}

/// Fraction of feed-forward post-activation entries with |a| < eps.
inline double activation_sparsity(const ForwardTrace& trace, std::size_t layer, double eps) {
    if (layer >= trace.ffn_activation.size()) throw MetricError("layer index out of range");
    if (!(eps > 0.0)) throw MetricError("eps must be positive");
    const Mat& a = trace.ffn_activation[layer];
    if (a.size() == 0) return 0.0;
    std::size_t near_zero = 0;
    for (double v : a.raw())
        if (std::abs(v) < eps) ++near_zero;
    return static_cast<double>(near_zero) / static_cast<double>(a.size());
}

/// exp(mean next-token NLL) over sliding windows of max_seq tokens advancing
/// by `stride` (default stride = max_seq, i.e. non-overlapping; every
/// position after the first is then predicted exactly once).
inline double perplexity(const Parameters& p, const ModelConfig& cfg,
                         const std::vector<std::size_t>& corpus, std::size_t stride = 0) {
    if (corpus.size() < 2) throw MetricError("perplexity needs at least 2 tokens");
    if (stride == 0) stride = cfg.max_seq;
    stride = std::min(stride, cfg.max_seq);
    double total_nll = 0.0;
    std::size_t positions = 0;
    for (std::size_t start = 0; start + 1 < corpus.size(); start += stride) {
        const std::size_t len = std::min(cfg.max_seq, corpus.size() - 1 - start);
        const std::vector<std::size_t> inputs(corpus.begin() + start,
                                              corpus.begin() + start + len);
        const std::vector<std::size_t> targets(corpus.begin() + start + 1,
                                               corpus.begin() + start + 1 + len);
        const double nll = loss(forward_logits(p, cfg, inputs), targets);
        total_nll += nll * static_cast<double>(len);
        positions += len;
    }
    return std::exp(total_nll / static_cast<double>(positions));
}

namespace detail {

struct TokenMatch {
    std::size_t pos_a;
    std::size_t pos_b;
};

/// Occurrence-index matching: the k-th occurrence of id v in A pairs with
/// the k-th occurrence of v in B.
inline std::vector<TokenMatch> match_occurrences(const std::vector<std::size_t>& a,
                                                 const std::vector<std::size_t>& b) {
    std::map<std::size_t, std::vector<std::size_t>> pos_b;
    for (std::size_t i = 0; i < b.size(); ++i) pos_b[b[i]].push_back(i);
    std::map<std::size_t, std::size_t> used;
    std::vector<TokenMatch> matches;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto it = pos_b.find(a[i]);
        if (it == pos_b.end()) continue;
        std::size_t& k = used[a[i]];
        if (k >= it->second.size()) continue;
        matches.push_back({i, it->second[k]});
        ++k;
    }
    return matches;
}

}  // namespace detail

/// Percentage of matched token pairs whose relative order differs between
/// the two sequences; 0 when fewer than 2 matches exist.
inline double token_reordering_frequency(const std::vector<std::size_t>& a,
                                         const std::vector<std::size_t>& b) {
    if (a.empty() || b.empty()) throw MetricError("reordering needs nonempty sequences");
    const auto matches = detail::match_occurrences(a, b);
    if (matches.size() < 2) return 0.0;
    std::size_t inverted = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < matches.size(); ++i) {
        for (std::size_t j = i + 1; j < matches.size(); ++j) {
            ++total;
            const bool order_a = matches[i].pos_a < matches[j].pos_a;
            const bool order_b = matches[i].pos_b < matches[j].pos_b;
            if (order_a != order_b) ++inverted;
        }
    }
    return 100.0 * static_cast<double>(inverted) / static_cast<double>(total);
}

/// Mean per-epoch overhead of the folding run relative to baseline, percent.
inline double training_overhead(const std::vector<double>& baseline_epochs,
                                const std::vector<double>& folding_epochs) {
    if (baseline_epochs.empty() || baseline_epochs.size() != folding_epochs.size())
        throw MetricError("training_overhead needs equal nonempty epoch lists");
    double mb = 0.0, mf = 0.0;
    for (double v : baseline_epochs) mb += v;
    for (double v : folding_epochs) mf += v;
    mb /= static_cast<double>(baseline_epochs.size());
    mf /= static_cast<double>(folding_epochs.size());
    if (mb == 0.0) throw MetricError("training_overhead undefined for zero baseline mean");
    return 100.0 * (mf - mb) / mb;
}

}  // namespace foldlm
