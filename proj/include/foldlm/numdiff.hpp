#pragma once

#include <cmath>
#include <functional>

#include "foldlm/mat.hpp"

namespace foldlm {

constexpr double kFiniteDiffStep = 1e-5;

/// Central-difference gradient of a scalar function of a matrix:
/// entry (i,j) = (f(X + h e_ij) - f(X - h e_ij)) / (2h).
/// The oracle every analytic gradient in this library is checked against.
inline Mat finite_diff_grad(const std::function<double(const Mat&)>& f, const Mat& x,
                            double h = kFiniteDiffStep) {
    if (!(h > 0.0)) throw NumericError("finite_diff_grad: step must be positive");
    Mat g(x.rows(), x.cols());
    Mat probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.raw()[i];
        probe.raw()[i] = orig + h;
        const double fp = f(probe);
        probe.raw()[i] = orig - h;
        const double fm = f(probe);
        probe.raw()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_diff_grad: non-finite probe value");
        }
        g.raw()[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Relative error between an analytic and a finite-difference value, with
/// small-magnitude entries treated as matching when both are tiny.
inline double rel_err(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom < 1e-12) return 0.0;
    return std::abs(a - b) / denom;
}

inline double max_rel_err(const Mat& a, const Mat& b, double exclude_below = 0.0) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (exclude_below > 0.0 && std::abs(a.raw()[i]) < exclude_below) continue;
        worst = std::max(worst, rel_err(a.raw()[i], b.raw()[i]));
    }
    return worst;
}

}  // namespace foldlm
