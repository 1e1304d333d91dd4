#pragma once

#include <cmath>

#include "foldlm/mat.hpp"

namespace foldlm {

/// Gaussian affinity over token rows: w_ij = exp(-||x_i - x_j||^2), w_ii = 0.
/// Symmetric, full graph.
inline Mat gaussian_affinity(const Mat& x) {
    const std::size_t n = x.rows();
    Mat w(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::exp(-sqdist_rows(x, i, x, j));
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return w;
}

/// Graph-Laplacian smoothing displacement: row i = sum_j w_ij (x_j - x_i)
/// with w from gaussian_affinity. Identical rows (and single rows) map to
/// zero.
inline Mat laplacian_apply(const Mat& x) {
    const Mat w = gaussian_affinity(x);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    Mat out(n, d);
    // sum_j w_ij (x_j - x_i) = (W x)_i - deg_i * x_i
    Mat wx = matmul(w, x);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += w(i, j);
        for (std::size_t k = 0; k < d; ++k) out(i, k) = wx(i, k) - deg * x(i, k);
    }
    return out;
}

}  // namespace foldlm
