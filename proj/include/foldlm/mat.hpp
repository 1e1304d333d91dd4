#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "foldlm/errors.hpp"

namespace foldlm {

/// Dense real matrix, row-major. The single value type every module works on.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Mat init: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

namespace detail {

// C += A * B with raw row-major buffers; ikj order keeps the inner loop
// running over contiguous rows of B and C so it vectorizes.
inline void mm_accum(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b + p * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

}  // namespace detail

/// Standard matrix product A(m x k) * B(k x n).
inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    }
    Mat c(a.rows(), b.cols());
    detail::mm_accum(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

/// A * B^T. B is materialized transposed first; the copy is negligible next
/// to the multiply at the sizes this library runs at.
inline Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    }
    Mat bt = transpose(b);
    Mat c(a.rows(), b.rows());
    detail::mm_accum(a.data(), bt.data(), c.data(), a.rows(), a.cols(), b.rows());
    return c;
}

/// A^T * B.
inline Mat matmul_tn(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
    }
    Mat at = transpose(a);
    Mat c(a.cols(), b.cols());
    detail::mm_accum(at.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
    return c;
}

inline Mat add(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("add: " + shape_str(a) + " vs " + shape_str(b));
    Mat c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.raw()[i] += b.raw()[i];
    return c;
}

inline Mat sub(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: " + shape_str(a) + " vs " + shape_str(b));
    Mat c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.raw()[i] -= b.raw()[i];
    return c;
}

inline Mat scale(const Mat& a, double s) {
    Mat c = a;
    for (double& v : c.raw()) v *= s;
    return c;
}

inline void axpy(Mat& y, double a, const Mat& x) {
    if (!y.same_shape(x)) throw ShapeError("axpy: " + shape_str(y) + " vs " + shape_str(x));
    for (std::size_t i = 0; i < y.size(); ++i) y.raw()[i] += a * x.raw()[i];
}

inline double row_sqnorm(const Mat& m, std::size_t i) {
    const double* r = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += r[j] * r[j];
    return s;
}

inline double sqdist_rows(const Mat& a, std::size_t i, const Mat& b, std::size_t j) {
    const double* x = a.row(i);
    const double* y = b.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return s;
}

constexpr double kRowNormGuard = 1e-12;

/// Scale each row to unit L2 norm. Rows with norm below the guard are
/// returned unchanged.
inline Mat row_normalize(const Mat& x) {
    Mat y = x;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const double n = std::sqrt(row_sqnorm(y, i));
        if (n < kRowNormGuard) continue;
        double* r = y.row(i);
        for (std::size_t j = 0; j < y.cols(); ++j) r[j] /= n;
    }
    return y;
}

inline Mat row_mean(const Mat& x) {
    Mat m(1, x.cols());
    if (x.rows() == 0) return m;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) m(0, j) += x(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) m(0, j) /= static_cast<double>(x.rows());
    return m;
}

}  // namespace foldlm
