#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "foldlm/mat.hpp"

namespace foldlm {

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in `evals` and eigenvectors as columns of the returned
/// matrix. Deterministic: fixed sweep order, fixed iteration cap.
inline Mat jacobi_eigen(Mat a, std::vector<double>& evals) {
    const std::size_t n = a.rows();
    Mat v = Mat::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0)
                                     ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                     : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    evals.resize(n);
    for (std::size_t i = 0; i < n; ++i) evals[i] = a(i, i);
    return v;
}

}  // namespace detail

/// Project mean-centered X onto its top-k principal components. Sign
/// convention: within each component, the largest-magnitude loading is made
/// positive (first index wins ties), so results are reproducible.
inline Mat pca_project(const Mat& x, std::size_t k) {
    if (k > x.cols()) {
        throw ShapeError("pca_project: k=" + std::to_string(k) + " > cols=" +
                         std::to_string(x.cols()));
    }
    if (x.rows() < 2) throw ShapeError("pca_project: need at least 2 rows");

    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const Mat mean = row_mean(x);
    Mat centered = x;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered(i, j) -= mean(0, j);

    Mat cov = matmul_tn(centered, centered);
    for (double& v : cov.raw()) v /= static_cast<double>(n - 1);

    std::vector<double> evals;
    Mat evecs = detail::jacobi_eigen(cov, evals);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return evals[a] > evals[b]; });

    Mat components(d, k);
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t src = order[c];
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (std::abs(evecs(j, src)) > best) {
                best = std::abs(evecs(j, src));
                arg = j;
            }
        }
        const double sign = evecs(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j) components(j, c) = sign * evecs(j, src);
    }
    return matmul(centered, components);
}

}  // namespace foldlm
