#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "foldlm/graph.hpp"
#include "foldlm/mat.hpp"
#include "foldlm/rng.hpp"

namespace foldlm {

/// Scalar hyperparameters of the folding mechanism.
///
///   alpha   weight of the attraction toward cluster centers
///   beta    diffusion weight on the Laplacian smoothing term
///   gamma   weight of the pairwise cohesion term
///   lambda  weight of the Laplacian perturbation added to the affine map
///   eta     step size of the per-layer adjustment
///   depth   number of folding layers applied by fold()
///   clusters  number of cluster centers K
///   sigma   per-dimension diffusion scale (empty means all ones)
///   flow_dt Euler step of the transformation flow
///   inner_steps  gradient adjustments per layer (default 1)
struct FoldingConfig {
    double alpha = 1.0;
    double beta = 0.5;
    double gamma = 0.5;
    double lambda = 0.0;
    double eta = 0.02;
    std::size_t depth = 3;
    std::size_t clusters = 4;
    std::vector<double> sigma;
    double flow_dt = 1e-2;
    std::size_t inner_steps = 1;

    double sigma_at(std::size_t j) const { return sigma.empty() ? 1.0 : sigma[j]; }

    void validate(std::size_t dim) const {
        auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
        if (bad(alpha) || bad(beta) || bad(gamma) || bad(lambda) || bad(eta)) {
            throw ConfigError("folding weights must be finite and non-negative");
        }
        if (depth < 1) throw ConfigError("depth must be >= 1");
        if (clusters < 1) throw ConfigError("clusters must be >= 1");
        if (!(flow_dt > 0.0)) throw ConfigError("flow_dt must be positive");
        if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
        if (!sigma.empty()) {
            if (sigma.size() != dim) {
                throw ConfigError("sigma length " + std::to_string(sigma.size()) +
                                  " != dimension " + std::to_string(dim));
            }
            for (double s : sigma)
                if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("sigma entries must be positive");
        }
    }
};

/// One folding stage: feature-space transform, bias, cluster centers, and
/// the residual gate. Construction is the identity mapping (gate closed).
struct FoldingLayer {
    Mat w_f;       // d x d, acts on the feature dimension
    Mat b_f;       // 1 x d
    Mat centers;   // K x d
    double gate = 0.0;

    FoldingLayer() = default;
    FoldingLayer(std::size_t d, std::size_t k)
        : w_f(Mat::identity(d)), b_f(1, d), centers(k, d), gate(0.0) {}
};

/// Per-layer record of a fold() run: embeddings, objective, and energy at
/// every level including the input (lists have depth + 1 entries).
struct FoldTrace {
    std::vector<Mat> embeddings;
    std::vector<double> objective;
    std::vector<double> energy;
};

/// x -> x W_f^T + b_f applied to every row.
inline Mat affine_transform(const Mat& x, const FoldingLayer& layer) {
    if (x.cols() != layer.w_f.rows()) {
        throw ShapeError("affine_transform: X " + shape_str(x) + " vs W_f " +
                         shape_str(layer.w_f));
    }
    Mat y = matmul_nt(x, layer.w_f);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += layer.b_f(0, j);
    return y;
}

/// Nearest-center assignment; ties break toward the lower index.
inline std::vector<std::size_t> assign_clusters(const Mat& x, const Mat& centers) {
    if (centers.rows() == 0) throw ConfigError("assign_clusters: no centers");
    if (centers.cols() != x.cols()) {
        throw ShapeError("assign_clusters: X " + shape_str(x) + " vs centers " +
                         shape_str(centers));
    }
    std::vector<std::size_t> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::size_t best = 0;
        double best_d = sqdist_rows(x, i, centers, 0);
        for (std::size_t k = 1; k < centers.rows(); ++k) {
            const double d = sqdist_rows(x, i, centers, k);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        out[i] = best;
    }
    return out;
}

/// Mean of assigned rows per cluster; an empty cluster keeps its previous
/// center verbatim.
inline Mat update_centers(const Mat& x, const std::vector<std::size_t>& assignment,
                          std::size_t k, const Mat& previous) {
    if (assignment.size() != x.rows()) {
        throw ShapeError("update_centers: assignment length " +
                         std::to_string(assignment.size()) + " != rows " +
                         std::to_string(x.rows()));
    }
    if (previous.rows() != k || previous.cols() != x.cols()) {
        throw ShapeError("update_centers: previous centers " + shape_str(previous));
    }
    Mat centers(k, x.cols());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const std::size_t c = assignment[i];
        ++count[c];
        for (std::size_t j = 0; j < x.cols(); ++j) centers(c, j) += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] == 0) {
            for (std::size_t j = 0; j < x.cols(); ++j) centers(c, j) = previous(c, j);
        } else {
            for (std::size_t j = 0; j < x.cols(); ++j)
                centers(c, j) /= static_cast<double>(count[c]);
        }
    }
    return centers;
}

/// F(X) = alpha sum_i ||x_i - c_a(i)||^2 - gamma sum_{i != j} exp(-||x_i - x_j||^2).
/// Descending F pulls tokens toward their centers and near neighbors
/// together. The pair sum runs over ordered pairs.
inline double structural_objective(const Mat& x, const Mat& centers,
                                   const std::vector<std::size_t>& assignment,
                                   const FoldingConfig& cfg) {
    double attraction = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        attraction += sqdist_rows(x, i, centers, assignment[i]);
    double cohesion = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = i + 1; j < x.rows(); ++j)
            cohesion += 2.0 * std::exp(-sqdist_rows(x, i, x, j));
    return cfg.alpha * attraction - cfg.gamma * cohesion;
}

/// Analytic gradient of structural_objective:
/// row i = 2 alpha (x_i - c_a(i)) + 4 gamma sum_{j != i} exp(-||x_i - x_j||^2)(x_i - x_j).
inline Mat objective_gradient(const Mat& x, const Mat& centers,
                              const std::vector<std::size_t>& assignment,
                              const FoldingConfig& cfg) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    Mat g(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        const double* ci = centers.row(assignment[i]);
        double* gi = g.row(i);
        for (std::size_t j = 0; j < d; ++j) gi[j] = 2.0 * cfg.alpha * (xi[j] - ci[j]);
    }
    if (cfg.gamma != 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double w = std::exp(-sqdist_rows(x, i, x, j));
                const double c = 4.0 * cfg.gamma * w;
                const double* xi = x.row(i);
                const double* xj = x.row(j);
                double* gi = g.row(i);
                double* gj = g.row(j);
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = c * (xi[k] - xj[k]);
                    gi[k] += diff;
                    gj[k] -= diff;
                }
            }
        }
    }
    return g;
}

namespace detail {

inline void check_finite(const Mat& m, const std::string& stage) {
    if (!m.all_finite()) throw NumericError("fold_step: non-finite values after " + stage);
}

}  // namespace detail

/// One folding layer applied to X: affine transform, gradient adjustment
/// against the structural objective plus Laplacian smoothing, then row
/// normalization.
inline Mat fold_step(const Mat& x, const FoldingLayer& layer, const FoldingConfig& cfg) {
    Mat x1 = affine_transform(x, layer);
    if (cfg.lambda > 0.0) axpy(x1, cfg.lambda, laplacian_apply(x));
    detail::check_finite(x1, "affine_transform");
    for (std::size_t it = 0; it < cfg.inner_steps; ++it) {
        const std::vector<std::size_t> assignment = assign_clusters(x1, layer.centers);
        Mat delta = objective_gradient(x1, layer.centers, assignment, cfg);
        for (double& v : delta.raw()) v = -v;
        if (cfg.beta != 0.0) axpy(delta, cfg.beta, laplacian_apply(x1));
        detail::check_finite(delta, "adjustment");
        axpy(x1, cfg.eta, delta);
        detail::check_finite(x1, "update");
    }
    return row_normalize(x1);
}

/// Energy of a configuration:
/// E = 1/2 sum_{i<j} w_ij ||x_i - x_j||^2 + alpha sum_i ||x_i - c_a(i)||^2
/// with w the Gaussian affinity. Non-negative; zero when all points sit on
/// one center.
inline double energy(const Mat& x, const Mat& centers,
                     const std::vector<std::size_t>& assignment, const FoldingConfig& cfg) {
    double pairs = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = i + 1; j < x.rows(); ++j) {
            const double d2 = sqdist_rows(x, i, x, j);
            pairs += std::exp(-d2) * d2;
        }
    }
    double attraction = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        attraction += sqdist_rows(x, i, centers, assignment[i]);
    return 0.5 * pairs + cfg.alpha * attraction;
}

/// Analytic gradient of energy() at fixed assignment:
/// row i = sum_{j != i} exp(-d_ij)(1 - d_ij)(x_i - x_j) + 2 alpha (x_i - c_a(i)).
/// The affinity's own dependence on X is differentiated through.
inline Mat energy_gradient(const Mat& x, const Mat& centers,
                           const std::vector<std::size_t>& assignment,
                           const FoldingConfig& cfg) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    Mat g(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = sqdist_rows(x, i, x, j);
            const double c = std::exp(-d2) * (1.0 - d2);
            const double* xi = x.row(i);
            const double* xj = x.row(j);
            double* gi = g.row(i);
            double* gj = g.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = c * (xi[k] - xj[k]);
                gi[k] += diff;
                gj[k] -= diff;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        const double* ci = centers.row(assignment[i]);
        double* gi = g.row(i);
        for (std::size_t k = 0; k < d; ++k) gi[k] += 2.0 * cfg.alpha * (xi[k] - ci[k]);
    }
    return g;
}

/// One explicit Euler step of the transformation flow:
/// X <- X + dt (-grad E(X) + beta sum_j w_ij sigma .* (x_j - x_i)).
inline Mat flow_step(const Mat& x, const Mat& centers,
                     const std::vector<std::size_t>& assignment, const FoldingConfig& cfg) {
    if (!(cfg.flow_dt > 0.0)) throw ConfigError("flow_step: flow_dt must be positive");
    Mat velocity = energy_gradient(x, centers, assignment, cfg);
    for (double& v : velocity.raw()) v = -v;
    if (cfg.beta != 0.0) {
        Mat diffusion = laplacian_apply(x);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j)
                velocity(i, j) += cfg.beta * cfg.sigma_at(j) * diffusion(i, j);
    }
    Mat out = x;
    axpy(out, cfg.flow_dt, velocity);
    if (!out.all_finite()) throw NumericError("flow_step: non-finite result");
    return out;
}

/// Fold loss, the discretized curvature-plus-cohesion regularizer:
/// L = sum_i ||(laplacian_apply X)_i||^2 - gamma sum_{i != j} exp(-||x_i - x_j||^2).
inline double fold_loss(const Mat& x, const FoldingConfig& cfg) {
    const Mat lap = laplacian_apply(x);
    double curvature = 0.0;
    for (double v : lap.raw()) curvature += v * v;
    double cohesion = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = i + 1; j < x.rows(); ++j)
            cohesion += 2.0 * std::exp(-sqdist_rows(x, i, x, j));
    return curvature - cfg.gamma * cohesion;
}

/// Build `depth` identity-initialized layers whose centers are K distinct
/// rows sampled from X.
inline std::vector<FoldingLayer> make_folding_layers(const Mat& x, const FoldingConfig& cfg,
                                                     RngState& rng) {
    if (x.rows() == 0) throw ConfigError("make_folding_layers: empty X");
    std::vector<FoldingLayer> layers;
    layers.reserve(cfg.depth);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        FoldingLayer layer(x.cols(), cfg.clusters);
        std::vector<std::size_t> picked;
        for (std::size_t k = 0; k < cfg.clusters; ++k) {
            std::size_t idx = 0;
            for (int attempt = 0; attempt < 64; ++attempt) {
                idx = static_cast<std::size_t>(rng_below(rng, x.rows()));
                bool dup = false;
                for (std::size_t p : picked) dup = dup || p == idx;
                if (!dup) break;
            }
            picked.push_back(idx);
            for (std::size_t j = 0; j < x.cols(); ++j) layer.centers(k, j) = x(idx, j);
        }
        layers.push_back(std::move(layer));
    }
    return layers;
}

/// The full hierarchical folding pass: for each layer, refresh centers from
/// the current embeddings, apply fold_step, and record embeddings,
/// objective, and energy. Level 0 entries describe the input under the
/// first layer's refreshed centers. Layers are taken by value; the caller's
/// layers are never mutated.
inline FoldTrace fold(const Mat& x, std::vector<FoldingLayer> layers, const FoldingConfig& cfg) {
    if (layers.size() != cfg.depth) {
        throw ConfigError("fold: layer count " + std::to_string(layers.size()) +
                          " != depth " + std::to_string(cfg.depth));
    }
    cfg.validate(x.cols());
    FoldTrace trace;
    trace.embeddings.reserve(cfg.depth + 1);
    trace.embeddings.push_back(x);
    Mat current = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        FoldingLayer& layer = layers[l];
        std::vector<std::size_t> assignment = assign_clusters(current, layer.centers);
        layer.centers = update_centers(current, assignment, cfg.clusters, layer.centers);
        assignment = assign_clusters(current, layer.centers);
        if (l == 0) {
            trace.objective.push_back(structural_objective(current, layer.centers, assignment, cfg));
            trace.energy.push_back(energy(current, layer.centers, assignment, cfg));
        }
        current = fold_step(current, layer, cfg);
        const std::vector<std::size_t> post = assign_clusters(current, layer.centers);
        trace.objective.push_back(structural_objective(current, layer.centers, post, cfg));
        trace.energy.push_back(energy(current, layer.centers, post, cfg));
        trace.embeddings.push_back(current);
    }
    return trace;
}

/// Result of run_flow: final configuration, the energy after every step
/// (index 0 is the initial energy), and the step sizes actually used.
struct FlowResult {
    Mat x;
    std::vector<double> energies;
    std::vector<double> dts;
};

/// Drive flow_step for `steps` iterations with monotonicity enforcement:
/// whenever a step would raise the energy by more than `slack`, the step is
/// retried with dt halved (the halved dt persists).
inline FlowResult run_flow(Mat x, const Mat& centers, FoldingConfig cfg, std::size_t steps,
                           double slack = 1e-9) {
    FlowResult res;
    std::vector<std::size_t> assignment = assign_clusters(x, centers);
    double e = energy(x, centers, assignment, cfg);
    res.energies.push_back(e);
    for (std::size_t s = 0; s < steps; ++s) {
        for (int halving = 0;; ++halving) {
            Mat next = flow_step(x, centers, assignment, cfg);
            const std::vector<std::size_t> next_assignment = assign_clusters(next, centers);
            const double e_next = energy(next, centers, next_assignment, cfg);
            if (e_next <= e + slack) {
                x = std::move(next);
                assignment = next_assignment;
                e = e_next;
                break;
            }
            if (halving >= 60) throw NumericError("run_flow: dt underflow without descent");
            cfg.flow_dt *= 0.5;
        }
        res.energies.push_back(e);
        res.dts.push_back(cfg.flow_dt);
    }
    res.x = std::move(x);
    return res;
}

}  // namespace foldlm
